//! Drivers that turn a [`RunConfig`] into simulations and derived metrics.

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;

use gatepulse_core::materials::{gaas_constants, gaas_device_frame, MaterialSet};
use gatepulse_core::mesh::build_box_mesh;
use gatepulse_core::probes::{
    amplitude_metrics, estimate_wavelength, find_crest, mode_speeds, record_line, response_time, surface_localization,
    AmplitudeMetrics, Field, ModeFilter, ProbeTrace, ResponseTime,
};
use gatepulse_core::pulse::TrapezoidalPulse;
use gatepulse_core::qubit::{
    infidelity, log_grid, micro_ev_to_rad_per_s, DetuningTrace, DotPair, QubitConfig,
};
use gatepulse_core::timeloop::{run, run_with, Device, PointProbe, RecordingPlan, RunOutput, RunParams, StepReport};

use crate::config::{Orientation, QubitSection, RunConfig};

pub fn material(cfg: &RunConfig) -> MaterialSet {
    let m = match cfg.orientation {
        Orientation::Device => gaas_device_frame(),
        Orientation::Crystal => gaas_constants(),
    };
    if cfg.piezo {
        m
    } else {
        m.without_piezo()
    }
}

pub fn build_device(cfg: &RunConfig) -> Result<Device> {
    let mesh = build_box_mesh(cfg.geometry.extents, cfg.geometry.divisions)?;
    Ok(Device::gated(mesh, material(cfg), &cfg.gates, cfg.geometry.y_faces)?)
}

pub fn center_x(device: &Device) -> f64 {
    device.regions.as_ref().map_or(0.5 * device.mesh.extents[0], |r| r.center_x(&device.mesh))
}

/// Positions of the two dots (near, far) for a qubit section.
pub fn dot_positions(device: &Device, q: &QubitSection) -> Result<[[f64; 3]; 2]> {
    let dots = DotPair::new(q.separation, q.distance, q.depth)?;
    let (x1, x2) = dots.x_positions(center_x(device));
    let z = device.mesh.extents[2] - q.depth;
    if x2 > device.mesh.extents[0] {
        bail!("far dot at x = {x2:e} m lies outside the domain");
    }
    Ok([[x1, 0.0, z], [x2, 0.0, z]])
}

/// Run parameters for `run`: line records, snapshots and, with a qubit
/// section, potential probes at the two dots.
pub fn run_params(cfg: &RunConfig, device: &Device) -> Result<RunParams> {
    let mut points = Vec::new();
    if let Some(q) = &cfg.qubit {
        points = dot_positions(device, q)?
            .into_iter()
            .map(|position| PointProbe { position, field: Field::Potential })
            .collect();
    }
    Ok(RunParams {
        pulse: cfg.pulse,
        t_end: cfg.time.t_end,
        dt: cfg.time.dt,
        safety: cfg.time.safety,
        cg: cfg.cg_config(),
        linear_solver: cfg.solver,
        recording: RecordingPlan {
            interval: cfg.probes.interval,
            line_depths: cfg.probes.depths.clone(),
            line_y: cfg.probes.line_y,
            points,
            point_every: 1,
            snapshot_times: cfg.output.snapshot_times.iter().copied().filter(|&t| t <= cfg.time.t_end).collect(),
        },
    })
}

pub fn simulate(cfg: &RunConfig, device: &Device, observe: impl FnMut(&StepReport)) -> Result<(RunParams, RunOutput)> {
    let params = run_params(cfg, device)?;
    let mut observe = observe;
    let out = run_with(device, &params, None, |_, r| observe(r))?;
    Ok((params, out))
}

/// Relative energy spread over reports with `from <= t <= to`.
pub fn energy_drift(reports: &[StepReport], from: f64, to: f64) -> f64 {
    let e: Vec<f64> = reports.iter().filter(|r| r.time >= from && r.time <= to).map(|r| r.energy).collect();
    let (lo, hi) = e.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mean = e.iter().sum::<f64>() / e.len().max(1) as f64;
    if e.is_empty() || mean == 0.0 {
        0.0
    } else {
        (hi - lo) / mean.abs()
    }
}

/// Wave metrics of one run, read at the last line record of the first depth.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub time: f64,
    pub depth: f64,
    pub amplitude: AmplitudeMetrics,
    /// Outward speeds of the tracked modes, slowest first; empty when nothing propagates.
    pub speeds: Vec<f64>,
    /// Crest position relative to the center gate at `time`, m.
    pub crest_offset: Option<f64>,
    pub wavelength: Option<f64>,
    pub localization: Option<f64>,
    /// Over one nanosecond (or the rest of the run) after the pulse ends.
    pub energy_drift: f64,
}

pub fn analyze(device: &Device, params: &RunParams, out: &RunOutput) -> Result<Propagation> {
    let line = out.lines.first().ok_or_else(|| anyhow!("no line records (probes.depths is empty)"))?;
    let k = line.values.len().checked_sub(1).ok_or_else(|| anyhow!("no line records taken"))?;
    let amplitude = amplitude_metrics(&line.x, &line.values[k])?;
    let center = center_x(device);
    let speeds = mode_speeds(&line.x, &line.values, &line.times, center, &ModeFilter::default())
        .map(|tracks| tracks.iter().map(|t| t.speed).collect())
        .unwrap_or_default();
    let mesh = &device.mesh;
    let phi = &out.final_state.phi;
    let surface = record_line(mesh, &device.dofs, phi, mesh.extents[2], params.recording.line_y)?;
    let (mut crest_offset, mut wavelength, mut localization) = (None, None, None);
    if let Ok(crest) = find_crest(&surface) {
        crest_offset = Some(line.x[crest] - center);
        if let Ok(lambda) = estimate_wavelength(&line.x, &surface, crest) {
            wavelength = Some(lambda);
            localization = surface_localization(mesh, &device.dofs, phi, line.x[crest], params.recording.line_y, lambda).ok();
        }
    }
    let off = params.pulse.end();
    Ok(Propagation {
        time: line.times[k],
        depth: line.depth,
        amplitude,
        speeds,
        crest_offset,
        wavelength,
        localization,
        energy_drift: energy_drift(&out.reports, off, off + 1e-9),
    })
}

impl Propagation {
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        let mut m = vec![
            ("time_s", self.time),
            ("depth_m", self.depth),
            ("rms_V", self.amplitude.rms),
            ("max_modulus_V", self.amplitude.max_modulus),
            ("energy_drift", self.energy_drift),
        ];
        if let Some(v) = self.speeds.first() {
            m.push(("slowest_speed_m_per_s", *v));
        }
        if let Some(v) = self.speeds.last() {
            m.push(("fastest_speed_m_per_s", *v));
        }
        for (name, v) in [
            ("crest_offset_m", self.crest_offset),
            ("wavelength_m", self.wavelength),
            ("localization", self.localization),
        ] {
            if let Some(v) = v {
                m.push((name, v));
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub duration: f64,
    pub rms: f64,
    pub max_modulus: f64,
}

/// φ metrics along the first probe depth, `settle` after the pulse ends, for
/// each pulse duration. Runs in parallel on `jobs` threads; output order
/// follows `durations`.
pub fn sweep_duration(cfg: &RunConfig, durations: &[f64], settle: f64, jobs: usize) -> Result<Vec<SweepPoint>> {
    let device = build_device(cfg)?;
    let depth = *cfg.probes.depths.first().ok_or_else(|| anyhow!("probes.depths is empty"))?;
    let z = device.mesh.extents[2] - depth;
    let one = |&td: &f64| -> Result<SweepPoint> {
        let pulse = TrapezoidalPulse::new(cfg.pulse.amplitude, cfg.pulse.rise, td, cfg.pulse.start)?;
        let mut params = run_params(cfg, &device)?;
        params.pulse = pulse;
        params.t_end = pulse.end() + settle;
        params.recording.line_depths.clear();
        params.recording.points.clear();
        params.recording.snapshot_times.clear();
        let out = run(&device, &params).with_context(|| format!("t_d = {td:e} s"))?;
        let line = record_line(&device.mesh, &device.dofs, &out.final_state.phi, z, cfg.probes.line_y)?;
        let m = amplitude_metrics(&node_x(&device), &line)?;
        Ok(SweepPoint { duration: td, rms: m.rms, max_modulus: m.max_modulus })
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    pool.install(|| durations.par_iter().map(one).collect())
}

fn node_x(device: &Device) -> Vec<f64> {
    (0..=device.mesh.divisions[0]).map(|i| i as f64 * device.mesh.spacing[0]).collect()
}

/// u_z under the center gate at `depth` while the bias is held for `hold`.
pub fn lattice_response(cfg: &RunConfig, hold: f64, depth: f64) -> Result<(ProbeTrace, ResponseTime)> {
    let device = build_device(cfg)?;
    let pulse = TrapezoidalPulse::new(cfg.pulse.amplitude, cfg.pulse.rise, hold, cfg.pulse.start)?;
    let mut params = run_params(cfg, &device)?;
    params.pulse = pulse;
    params.t_end = pulse.end();
    params.recording.line_depths.clear();
    params.recording.snapshot_times.clear();
    params.recording.points = vec![PointProbe {
        position: [center_x(&device), cfg.probes.line_y, device.mesh.extents[2] - depth],
        field: Field::Displacement(2),
    }];
    let out = run(&device, &params)?;
    let trace = out.points.into_iter().next().ok_or_else(|| anyhow!("probe not recorded"))?;
    let on_start = pulse.start;
    let on_end = pulse.start + pulse.rise + pulse.duration;
    let r = response_time(&trace.times, &trace.values, on_start, on_end)?;
    Ok((trace, r))
}

/// Detuning from the two dot probes of a run, rescaled to the section's drive.
pub fn detuning_trace(cfg: &RunConfig, out: &RunOutput) -> Result<DetuningTrace> {
    let q = cfg.qubit.as_ref().ok_or_else(|| anyhow!("configuration has no [qubit] section"))?;
    let [a, b] = out.points.as_slice() else { bail!("expected two dot probes, found {}", out.points.len()) };
    let trace = DetuningTrace::from_potentials(&a.times, &b.times, &a.values, &b.values, q.charge_sign)?;
    Ok(match q.drive {
        Some(v) if cfg.pulse.amplitude != 0.0 => trace.scaled(v / cfg.pulse.amplitude),
        _ => trace,
    })
}

/// Infidelity over a log grid of tunnel couplings (eV); returns (Δ in eV, 1 − F).
pub fn infidelity_curve(trace: &DetuningTrace, lo_ev: f64, hi_ev: f64, points: usize) -> Result<Vec<(f64, f64)>> {
    let grid = log_grid(lo_ev, hi_ev, points)?;
    let cfg = QubitConfig::default();
    grid.par_iter()
        .map(|&d| Ok((d, infidelity(trace, micro_ev_to_rad_per_s(d * 1e6), &cfg)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn small() -> RunConfig {
        parse_config(
            "[geometry]\nlx = 4 um\nly = 100 nm\nlz = 1 um\nnx = 40\nny = 1\nnz = 10\n\
             [time]\nt_end = 0.4 ns\n[output]\nsnapshots = 0.4 ns\n",
        )
        .unwrap()
    }

    #[test]
    fn zero_amplitude_gives_zero_metrics() {
        let mut cfg = small();
        cfg.pulse.amplitude = 0.0;
        let dev = build_device(&cfg).unwrap();
        let (params, out) = simulate(&cfg, &dev, |_| {}).unwrap();
        let p = analyze(&dev, &params, &out).unwrap();
        assert_eq!((p.amplitude.rms, p.amplitude.max_modulus), (0.0, 0.0));
        assert!(p.speeds.is_empty() && p.localization.is_none());
    }

    #[test]
    fn sweep_is_linear_in_amplitude_and_ordered() {
        let cfg = small();
        let tds = [0.0, 0.1e-9];
        let a = sweep_duration(&cfg, &tds, 0.1e-9, 2).unwrap();
        let mut twice = cfg.clone();
        twice.pulse.amplitude *= 2.0;
        let b = sweep_duration(&twice, &tds, 0.1e-9, 1).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.duration, q.duration);
            assert!((q.rms - 2.0 * p.rms).abs() < 1e-6 * q.rms);
        }
    }

    #[test]
    fn dots_sit_on_the_far_side() {
        let mut cfg = RunConfig::default();
        cfg.qubit = Some(QubitSection::default());
        let dev = build_device(&small()).unwrap();
        assert!(dot_positions(&dev, cfg.qubit.as_ref().unwrap()).is_err());
        cfg.qubit.as_mut().unwrap().distance = 1e-6;
        let [p1, p2] = dot_positions(&dev, cfg.qubit.as_ref().unwrap()).unwrap();
        assert!((p2[0] - p1[0] - 200e-9).abs() < 1e-15);
        assert!((p1[2] - 0.9e-6).abs() < 1e-15);
    }
}
