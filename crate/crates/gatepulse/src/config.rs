//! Run configuration: a sectioned `key = value` text format with unit suffixes.
//!
//! ```text
//! # comment
//! [pulse]
//! amplitude = 1 V
//! t_d = 0.3 ns
//!
//! time.t_end = 2 ns        # dotted keys work anywhere
//! probes.depths = 100 nm, 500 nm
//! ```
//!
//! Dimensioned values need a suffix (`nm um mm m`, `fs ps ns us ms s`,
//! `uV mV V`, `ueV meV eV`; `µ` is accepted for `u`). A bare `0` is allowed.
//! Unknown keys are errors and missing keys keep their defaults.

use std::path::PathBuf;

use gatepulse_core::pulse::{GateLayout, TrapezoidalPulse};
use gatepulse_core::solver::{CgConfig, LinearSolver, Preconditioner};
use gatepulse_core::timeloop::YFaces;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}`: {message}")]
    Value { line: usize, key: String, message: String },
    #[error("`{key}`: {message}")]
    Constraint { key: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Length,
    Time,
    Voltage,
    Energy,
}

impl Dim {
    /// Suffix and divisor to SI, so `100 nm` is exactly `1e-7`.
    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Dim::Length => &[("nm", 1e9), ("um", 1e6), ("mm", 1e3), ("m", 1.0)],
            Dim::Time => &[("fs", 1e15), ("ps", 1e12), ("ns", 1e9), ("us", 1e6), ("ms", 1e3), ("s", 1.0)],
            Dim::Voltage => &[("uV", 1e6), ("mV", 1e3), ("V", 1.0)],
            Dim::Energy => &[("ueV", 1e6), ("meV", 1e3), ("eV", 1.0)],
        }
    }

    fn name(self) -> &'static str {
        match self {
            Dim::Length => "length",
            Dim::Time => "time",
            Dim::Voltage => "voltage",
            Dim::Energy => "energy",
        }
    }
}

/// Parse `"250 nm"` into SI (`2.5e-7`). Energies come back in eV.
pub fn parse_quantity(text: &str, dim: Dim) -> Result<f64, String> {
    let t = text.trim().replace('µ', "u");
    let number = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite());
    if let Some(v) = number(&t) {
        return if v == 0.0 { Ok(0.0) } else { Err(format!("`{text}` needs a {} unit", dim.name())) };
    }
    let all = [Dim::Length, Dim::Time, Dim::Voltage, Dim::Energy];
    let mut best: Option<(Dim, f64, f64, usize)> = None;
    for d in all {
        for &(unit, divisor) in d.units() {
            if let Some(v) = t.strip_suffix(unit).and_then(number) {
                if best.map_or(true, |b| unit.len() > b.3) {
                    best = Some((d, v, divisor, unit.len()));
                }
            }
        }
    }
    match best {
        Some((d, v, divisor, _)) if d == dim => Ok(v / divisor),
        Some((d, ..)) => Err(format!("`{text}` is a {} but a {} is expected", d.name(), dim.name())),
        None => Err(format!("`{text}` is not a number with a {} unit", dim.name())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub extents: [f64; 3],
    pub divisions: [usize; 3],
    pub y_faces: YFaces,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// x ∥ [011], z ∥ [100]
    Device,
    Crystal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeConfig {
    pub t_end: f64,
    pub dt: Option<f64>,
    pub safety: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    /// below the top face
    pub depths: Vec<f64>,
    pub interval: f64,
    pub line_y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub snapshot_times: Vec<f64>,
    pub vtk: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QubitSection {
    pub separation: f64,
    pub distance: f64,
    pub depth: f64,
    /// Pulse amplitude the recorded potentials are rescaled to (linear response), V.
    pub drive: Option<f64>,
    pub charge_sign: f64,
    /// tunnel coupling range, eV
    pub delta_min: f64,
    pub delta_max: f64,
    pub delta_points: usize,
}

impl Default for QubitSection {
    fn default() -> Self {
        Self {
            separation: 200e-9,
            distance: 5e-6,
            depth: 100e-9,
            drive: None,
            charge_sign: 1.0,
            delta_min: 0.1e-6,
            delta_max: 30e-6,
            delta_points: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub geometry: Geometry,
    pub orientation: Orientation,
    pub piezo: bool,
    pub gates: GateLayout,
    pub pulse: TrapezoidalPulse,
    pub time: TimeConfig,
    pub solver: LinearSolver,
    pub cg: CgConfig,
    pub probes: ProbeConfig,
    pub output: OutputConfig,
    pub qubit: Option<QubitSection>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: Geometry { extents: [16e-6, 50e-9, 4e-6], divisions: [320, 1, 80], y_faces: YFaces::Symmetric },
            orientation: Orientation::Device,
            piezo: true,
            gates: GateLayout::default(),
            pulse: TrapezoidalPulse::default(),
            time: TimeConfig { t_end: 2e-9, dt: None, safety: 0.5 },
            solver: LinearSolver::ConjugateGradient,
            cg: CgConfig::default(),
            probes: ProbeConfig { depths: vec![100e-9], interval: 0.1e-9, line_y: 0.0 },
            output: OutputConfig { dir: PathBuf::from("out"), snapshot_times: vec![2e-9], vtk: true },
            qubit: None,
        }
    }
}

enum Kind {
    Length,
    Time,
    Voltage,
    Energy,
    Count,
    Real,
    Word(&'static [&'static str]),
    Bool,
    Path,
    LengthList,
    TimeList,
}

const KEYS: &[(&str, Kind)] = &[
    ("geometry.lx", Kind::Length),
    ("geometry.ly", Kind::Length),
    ("geometry.lz", Kind::Length),
    ("geometry.nx", Kind::Count),
    ("geometry.ny", Kind::Count),
    ("geometry.nz", Kind::Count),
    ("geometry.y_faces", Kind::Word(&["symmetric", "free"])),
    ("material.name", Kind::Word(&["gaas"])),
    ("material.orientation", Kind::Word(&["device", "crystal"])),
    ("material.piezo", Kind::Bool),
    ("gates.a", Kind::Length),
    ("gates.d", Kind::Length),
    ("pulse.amplitude", Kind::Voltage),
    ("pulse.t_r", Kind::Time),
    ("pulse.t_d", Kind::Time),
    ("pulse.t0", Kind::Time),
    ("time.t_end", Kind::Time),
    ("time.dt", Kind::Time),
    ("time.safety", Kind::Real),
    ("solver.kind", Kind::Word(&["cg", "cholesky"])),
    ("solver.tolerance", Kind::Real),
    ("solver.max_iterations", Kind::Count),
    ("probes.depths", Kind::LengthList),
    ("probes.interval", Kind::Time),
    ("probes.y", Kind::Length),
    ("output.dir", Kind::Path),
    ("output.snapshots", Kind::TimeList),
    ("output.vtk", Kind::Bool),
    ("qubit.separation", Kind::Length),
    ("qubit.distance", Kind::Length),
    ("qubit.depth", Kind::Length),
    ("qubit.drive", Kind::Voltage),
    ("qubit.charge_sign", Kind::Real),
    ("qubit.delta_min", Kind::Energy),
    ("qubit.delta_max", Kind::Energy),
    ("qubit.delta_points", Kind::Count),
];

enum Value {
    Num(f64),
    Count(usize),
    Word(String),
    Bool(bool),
    List(Vec<f64>),
}

fn parse_value(kind: &Kind, raw: &str) -> Result<Value, String> {
    let list = |dim| raw.split(',').map(|p| parse_quantity(p, dim)).collect::<Result<Vec<_>, _>>().map(Value::List);
    match kind {
        Kind::Length => parse_quantity(raw, Dim::Length).map(Value::Num),
        Kind::Time => parse_quantity(raw, Dim::Time).map(Value::Num),
        Kind::Voltage => parse_quantity(raw, Dim::Voltage).map(Value::Num),
        Kind::Energy => parse_quantity(raw, Dim::Energy).map(Value::Num),
        Kind::Count => raw.parse().map(Value::Count).map_err(|_| format!("`{raw}` is not a non-negative integer")),
        Kind::Real => match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Value::Num(v)),
            _ => Err(format!("`{raw}` is not a number")),
        },
        Kind::Word(allowed) => {
            let w = raw.to_ascii_lowercase();
            if allowed.contains(&w.as_str()) {
                Ok(Value::Word(w))
            } else {
                Err(format!("expected one of {}", allowed.join(", ")))
            }
        }
        Kind::Bool => match raw {
            "true" | "yes" | "on" => Ok(Value::Bool(true)),
            "false" | "no" | "off" => Ok(Value::Bool(false)),
            _ => Err(format!("`{raw}` is not a boolean")),
        },
        Kind::Path => Ok(Value::Word(raw.to_string())),
        Kind::LengthList => {
            if raw.is_empty() {
                Ok(Value::List(Vec::new()))
            } else {
                list(Dim::Length)
            }
        }
        Kind::TimeList => {
            if raw.is_empty() {
                Ok(Value::List(Vec::new()))
            } else {
                list(Dim::Time)
            }
        }
    }
}

/// Parse and validate a configuration. An empty text gives [`RunConfig::default`].
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut section: Option<String> = None;
    for (k, raw_line) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .map(str::trim)
                .filter(|n| !n.is_empty() && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'))
                .ok_or_else(|| ConfigError::Syntax { line, message: format!("malformed section header `{content}`") })?;
            if !KEYS.iter().any(|(key, _)| key.starts_with(&format!("{name}."))) {
                return Err(ConfigError::Syntax { line, message: format!("unknown section `[{name}]`") });
            }
            if name == "qubit" && cfg.qubit.is_none() {
                cfg.qubit = Some(QubitSection::default());
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, raw) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line, message: format!("expected `key = value`, got `{content}`") })?;
        let (key, raw) = (key.trim(), raw.trim());
        if key.is_empty() {
            return Err(ConfigError::Syntax { line, message: "empty key".into() });
        }
        let full = if key.contains('.') {
            key.to_string()
        } else if let Some(s) = &section {
            format!("{s}.{key}")
        } else {
            return Err(ConfigError::Syntax { line, message: format!("`{key}` appears before any section header") });
        };
        let kind = KEYS
            .iter()
            .find(|(k, _)| *k == full)
            .map(|(_, kind)| kind)
            .ok_or_else(|| ConfigError::UnknownKey { line, key: full.clone() })?;
        let value = parse_value(kind, raw).map_err(|message| ConfigError::Value { line, key: full.clone(), message })?;
        apply(&mut cfg, &full, value);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply(cfg: &mut RunConfig, key: &str, value: Value) {
    let num = |v: &Value| if let Value::Num(x) = v { *x } else { unreachable!("kind table mismatch") };
    let count = |v: &Value| if let Value::Count(x) = v { *x } else { unreachable!("kind table mismatch") };
    if key.starts_with("qubit.") && cfg.qubit.is_none() {
        cfg.qubit = Some(QubitSection::default());
    }
    match (key, &value) {
        ("geometry.lx", v) => cfg.geometry.extents[0] = num(v),
        ("geometry.ly", v) => cfg.geometry.extents[1] = num(v),
        ("geometry.lz", v) => cfg.geometry.extents[2] = num(v),
        ("geometry.nx", v) => cfg.geometry.divisions[0] = count(v),
        ("geometry.ny", v) => cfg.geometry.divisions[1] = count(v),
        ("geometry.nz", v) => cfg.geometry.divisions[2] = count(v),
        ("geometry.y_faces", Value::Word(w)) => {
            cfg.geometry.y_faces = if w == "free" { YFaces::Free } else { YFaces::Symmetric }
        }
        ("material.name", _) => {}
        ("material.orientation", Value::Word(w)) => {
            cfg.orientation = if w == "crystal" { Orientation::Crystal } else { Orientation::Device }
        }
        ("material.piezo", Value::Bool(b)) => cfg.piezo = *b,
        ("gates.a", v) => cfg.gates.width = num(v),
        ("gates.d", v) => cfg.gates.gap = num(v),
        ("pulse.amplitude", v) => cfg.pulse.amplitude = num(v),
        ("pulse.t_r", v) => cfg.pulse.rise = num(v),
        ("pulse.t_d", v) => cfg.pulse.duration = num(v),
        ("pulse.t0", v) => cfg.pulse.start = num(v),
        ("time.t_end", v) => cfg.time.t_end = num(v),
        ("time.dt", v) => cfg.time.dt = Some(num(v)),
        ("time.safety", v) => cfg.time.safety = num(v),
        ("solver.kind", Value::Word(w)) => {
            cfg.solver = if w == "cholesky" { LinearSolver::Cholesky } else { LinearSolver::ConjugateGradient }
        }
        ("solver.tolerance", v) => cfg.cg.tolerance = num(v),
        ("solver.max_iterations", v) => cfg.cg.max_iterations = count(v),
        ("probes.depths", Value::List(l)) => cfg.probes.depths = l.clone(),
        ("probes.interval", v) => cfg.probes.interval = num(v),
        ("probes.y", v) => cfg.probes.line_y = num(v),
        ("output.dir", Value::Word(w)) => cfg.output.dir = PathBuf::from(w),
        ("output.snapshots", Value::List(l)) => cfg.output.snapshot_times = l.clone(),
        ("output.vtk", Value::Bool(b)) => cfg.output.vtk = *b,
        (k, v) => {
            let q = cfg.qubit.as_mut().expect("qubit section created above");
            match k {
                "qubit.separation" => q.separation = num(v),
                "qubit.distance" => q.distance = num(v),
                "qubit.depth" => q.depth = num(v),
                "qubit.drive" => q.drive = Some(num(v)),
                "qubit.charge_sign" => q.charge_sign = num(v),
                "qubit.delta_min" => q.delta_min = num(v),
                "qubit.delta_max" => q.delta_max = num(v),
                "qubit.delta_points" => q.delta_points = count(v),
                _ => unreachable!("key `{k}` is in the table but not handled"),
            }
        }
    }
}

fn constraint(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Constraint { key: key.into(), message: message.into() }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (a, name) in ["lx", "ly", "lz"].iter().enumerate() {
            if !(self.geometry.extents[a] > 0.0) {
                return Err(constraint(&format!("geometry.{name}"), "must be positive"));
            }
        }
        for (a, name) in ["nx", "ny", "nz"].iter().enumerate() {
            if self.geometry.divisions[a] == 0 {
                return Err(constraint(&format!("geometry.{name}"), "must be at least 1"));
            }
        }
        if !(self.gates.width > 0.0) {
            return Err(constraint("gates.a", "must be positive"));
        }
        if !(self.gates.gap > 0.0) {
            return Err(constraint("gates.d", "must be positive"));
        }
        if !(self.pulse.rise > 0.0) {
            return Err(constraint("pulse.t_r", "must be positive"));
        }
        if !(self.pulse.duration >= 0.0) {
            return Err(constraint("pulse.t_d", "must be non-negative"));
        }
        if !(self.pulse.start >= 0.0) {
            return Err(constraint("pulse.t0", "must be non-negative"));
        }
        if !(self.time.t_end > 0.0) {
            return Err(constraint("time.t_end", "must be positive"));
        }
        if let Some(dt) = self.time.dt {
            if !(dt > 0.0) {
                return Err(constraint("time.dt", "must be positive"));
            }
        }
        if !(self.time.safety > 0.0 && self.time.safety <= 1.0) {
            return Err(constraint("time.safety", "must lie in (0, 1]"));
        }
        if !(self.cg.tolerance > 0.0 && self.cg.tolerance < 1.0) {
            return Err(constraint("solver.tolerance", "must lie in (0, 1)"));
        }
        if self.cg.max_iterations == 0 {
            return Err(constraint("solver.max_iterations", "must be at least 1"));
        }
        if self.probes.depths.iter().any(|&d| !(d >= 0.0 && d <= self.geometry.extents[2])) {
            return Err(constraint("probes.depths", "each depth must lie within the domain"));
        }
        if !(self.probes.interval > 0.0) {
            return Err(constraint("probes.interval", "must be positive"));
        }
        if !(self.probes.line_y >= 0.0 && self.probes.line_y <= self.geometry.extents[1]) {
            return Err(constraint("probes.y", "must lie within the domain"));
        }
        if self.output.snapshot_times.iter().any(|&t| !(t >= 0.0)) {
            return Err(constraint("output.snapshots", "times must be non-negative"));
        }
        if let Some(q) = &self.qubit {
            if !(q.separation > 0.0) {
                return Err(constraint("qubit.separation", "must be positive"));
            }
            if !(q.depth >= 0.0 && q.depth <= self.geometry.extents[2]) {
                return Err(constraint("qubit.depth", "must lie within the domain"));
            }
            if q.charge_sign != 1.0 && q.charge_sign != -1.0 {
                return Err(constraint("qubit.charge_sign", "must be 1 or -1"));
            }
            if !(q.delta_min > 0.0 && q.delta_max >= q.delta_min) {
                return Err(constraint("qubit.delta_min", "need 0 < delta_min <= delta_max"));
            }
            if q.delta_points == 0 {
                return Err(constraint("qubit.delta_points", "must be at least 1"));
            }
        }
        Ok(())
    }

    /// CG settings with the configured preconditioner (always Jacobi).
    pub fn cg_config(&self) -> CgConfig {
        CgConfig { preconditioner: Preconditioner::Jacobi, ..self.cg }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.gates.width, 250e-9);
        assert_eq!(cfg.gates.gap, 250e-9);
        assert_eq!(cfg.pulse.amplitude, 1.0);
        assert_eq!(cfg.pulse.rise, 0.025e-9);
        assert_eq!(cfg.pulse.duration, 0.3e-9);
    }

    #[test]
    fn dotted_override_changes_one_field() {
        let cfg = parse_config("pulse.amplitude = 2 V").unwrap();
        let mut want = RunConfig::default();
        want.pulse.amplitude = 2.0;
        assert_eq!(cfg, want);
    }

    #[test]
    fn negative_rise_is_a_named_constraint_error() {
        let err = parse_config("pulse.t_r = -1 ns").unwrap_err();
        assert!(matches!(&err, ConfigError::Constraint { key, .. } if key == "pulse.t_r"), "{err}");
    }

    #[test]
    fn sections_and_units() {
        let text = "\
# desk run
[geometry]
lx = 8 um
nx = 160
[probes]
depths = 100 nm, 0.5 um
interval = 50 ps
[qubit]
delta_max = 20 µeV
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.geometry.extents[0], 8e-6);
        assert_eq!(cfg.geometry.divisions[0], 160);
        assert_eq!(cfg.probes.depths, vec![100e-9, 0.5e-6]);
        assert!((cfg.probes.interval - 50e-12).abs() < 1e-24);
        let q = cfg.qubit.unwrap();
        assert!((q.delta_max - 20e-6).abs() < 1e-18);
        assert_eq!(q.distance, 5e-6);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_config("[pulse]\n\namplitude = 3 nm").unwrap_err();
        assert!(matches!(err, ConfigError::Value { line: 3, .. }), "{err}");
        assert!(matches!(parse_config("[pulse]\nbogus = 1").unwrap_err(), ConfigError::UnknownKey { line: 2, .. }));
        assert!(matches!(parse_config("x = 1").unwrap_err(), ConfigError::Syntax { line: 1, .. }));
        assert!(matches!(parse_config("[nowhere]").unwrap_err(), ConfigError::Syntax { line: 1, .. }));
        assert!(matches!(parse_config("[pulse\n").unwrap_err(), ConfigError::Syntax { line: 1, .. }));
        assert!(matches!(parse_config("pulse.amplitude 2 V").unwrap_err(), ConfigError::Syntax { line: 1, .. }));
    }

    #[test]
    fn quantities() {
        assert_eq!(parse_quantity("250 nm", Dim::Length), Ok(250e-9));
        assert_eq!(parse_quantity("1e-3 V", Dim::Voltage), Ok(1e-3));
        assert_eq!(parse_quantity("2.5e2nm", Dim::Length), Ok(250e-9));
        assert_eq!(parse_quantity("0", Dim::Time), Ok(0.0));
        assert!(parse_quantity("3", Dim::Time).is_err());
        assert!(parse_quantity("3 ns", Dim::Length).is_err());
        assert!(parse_quantity("abc", Dim::Length).is_err());
        assert_eq!(parse_quantity("1 eV", Dim::Energy), Ok(1.0));
        assert_eq!(parse_quantity("3 meV", Dim::Energy), Ok(3e-3));
        assert_eq!(parse_quantity("4 ms", Dim::Time), Ok(4e-3));
        assert_eq!(parse_quantity("2 m", Dim::Length), Ok(2.0));
    }
}
