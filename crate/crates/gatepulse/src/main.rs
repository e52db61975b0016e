use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use gatepulse::config::{parse_config, parse_quantity, Dim, RunConfig};
use gatepulse::{io, scenarios, verify};
use gatepulse_core::materials::{christoffel_modes, gaas_constants, gaas_device_frame, MaterialSet};
use gatepulse_core::probes::knee_point;
use gatepulse_core::qubit::DetuningTrace;
use gatepulse_core::timeloop::{aligned_dt, StepReport};

#[derive(Parser)]
#[command(name = "gatepulse", version, about = "Gate-pulse driven piezoelectric waves in GaAs and their effect on a charge qubit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn time_arg(s: &str) -> Result<f64, String> {
    parse_quantity(s, Dim::Time)
}

fn energy_arg(s: &str) -> Result<f64, String> {
    parse_quantity(s, Dim::Energy)
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write traces, metrics and snapshots.
    Run {
        config: PathBuf,
        /// Also write one CSV row per step to step_log.csv.
        #[arg(long)]
        step_log: bool,
        /// Upper bound on the time step (clamped to the stability limit).
        #[arg(long, value_parser = time_arg)]
        dt: Option<f64>,
        /// Output directory (overrides output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the pulse duration and report φ metrics after each pulse.
    SweepTd {
        config: PathBuf,
        #[arg(long, value_parser = time_arg)]
        from: f64,
        #[arg(long, value_parser = time_arg)]
        to: f64,
        /// Number of durations, endpoints included.
        #[arg(long)]
        steps: usize,
        /// Delay after the pulse ends at which metrics are taken.
        #[arg(long, value_parser = time_arg, default_value = "0.5 ns")]
        settle: f64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the rotated material tensors and Christoffel velocities.
    Materials {
        /// Propagation direction, e.g. `1,0,0` (normalized).
        #[arg(long, default_value = "1,0,0")]
        direction: String,
        /// Tensors in the cubic crystal frame instead of the device frame.
        #[arg(long)]
        crystal: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Infidelity versus tunnel coupling for a dot-potential trace CSV (t_s, phi1_V, phi2_V).
    Qubit {
        trace: PathBuf,
        /// Tunnel coupling range, e.g. `--delta-range "0.1 ueV" "30 ueV"`.
        #[arg(long, num_args = 2, value_parser = energy_arg, default_values = ["0.1 ueV", "30 ueV"])]
        delta_range: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        points: usize,
        /// Factor applied to both potentials (linear rescaling of the drive).
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        charge_sign: f64,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the oracle and invariant checks.
    Verify,
    /// Summarize mesh, gates, pulse and time step for a configuration.
    Describe {
        config: PathBuf,
        /// Write K_uu, K_uφ and K_φφ as Matrix Market files into this directory.
        #[arg(long)]
        dump_matrices: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in {}", path.display()))
}

fn warn_if_clamped(cfg: &RunConfig, stable: f64) {
    if let Some(dt) = cfg.time.dt {
        if dt > stable {
            eprintln!("warning: requested dt {dt:e} s exceeds the stable step {stable:e} s; using the stable step");
        }
    }
}

fn cmd_run(config: &Path, step_log: bool, dt: Option<f64>, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = load_config(config)?;
    if dt.is_some() {
        cfg.time.dt = dt;
    }
    if let Some(dir) = out {
        cfg.output.dir = dir;
    }
    let dir = cfg.output.dir.clone();
    let device = scenarios::build_device(&cfg)?;
    warn_if_clamped(&cfg, device.stable_dt(cfg.time.safety));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let mut log = if step_log {
        let path = dir.join("step_log.csv");
        let mut w = csv::Writer::from_writer(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        w.write_record(["step", "t_s", "cg_iterations", "residual", "max_u_m", "max_phi_V", "energy_J"])?;
        Some((w, path))
    } else {
        None
    };
    let mut log_error = None;
    let (params, output) = scenarios::simulate(&cfg, &device, |r: &StepReport| {
        if let Some((w, _)) = log.as_mut() {
            let row = [
                r.step.to_string(),
                io::format_f64(r.time),
                r.cg_iterations.to_string(),
                io::format_f64(r.residual),
                io::format_f64(r.max_u),
                io::format_f64(r.max_phi),
                io::format_f64(r.energy),
            ];
            if let Err(e) = w.write_record(&row) {
                log_error.get_or_insert(e);
            }
        }
    })?;
    if let Some((mut w, path)) = log {
        if let Some(e) = log_error {
            return Err(e).with_context(|| format!("writing {}", path.display()));
        }
        w.flush().with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{} steps of {:e} s to t = {:e} s", output.steps, output.dt, output.steps as f64 * output.dt);

    for line in &output.lines {
        let path = dir.join(format!("line_{:.0}nm.csv", line.depth * 1e9));
        io::write_line_csv(&path, line)?;
    }
    if !output.lines.is_empty() {
        let p = scenarios::analyze(&device, &params, &output)?;
        let metrics = p.metrics();
        io::write_metrics_csv(&dir.join("metrics.csv"), &metrics)?;
        for (name, v) in &metrics {
            println!("{name} = {v:e}");
        }
    }
    if cfg.output.vtk {
        for snap in &output.snapshots {
            let path = dir.join(format!("snapshot_{:.3}ns.vtk", snap.time * 1e9));
            io::write_vtk_snapshot(&path, &device.mesh, &device.dofs, snap)?;
        }
    }
    if let Some(q) = &cfg.qubit {
        io::write_trace_csv(&dir.join("dots.csv"), &output.points, &["phi1_V", "phi2_V"])?;
        let trace = scenarios::detuning_trace(&cfg, &output)?;
        let curve = scenarios::infidelity_curve(&trace, q.delta_min, q.delta_max, q.delta_points)?;
        write_curve(&dir.join("infidelity.csv"), &curve)?;
        let (lo, hi) = extremes(&curve);
        println!("infidelity min = {lo:e}, max = {hi:e}");
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn extremes(curve: &[(f64, f64)]) -> (f64, f64) {
    curve.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(_, v)| (a.min(v), b.max(v)))
}

fn write_curve(path: &Path, curve: &[(f64, f64)]) -> Result<()> {
    let rows: Vec<Vec<f64>> = curve.iter().map(|&(d, i)| vec![d * 1e6, i]).collect();
    io::write_table(path, &["delta_ueV", "infidelity"], &rows)
}

fn cmd_sweep(config: &Path, from: f64, to: f64, steps: usize, settle: f64, jobs: usize, out: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(config)?;
    if steps < 2 || !(to > from) || from < 0.0 {
        bail!("need 0 <= --from < --to and --steps >= 2");
    }
    let durations: Vec<f64> = (0..steps).map(|k| from + (to - from) * k as f64 / (steps - 1) as f64).collect();
    let points = scenarios::sweep_duration(&cfg, &durations, settle, jobs)?;
    let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
    let rows: Vec<Vec<f64>> = points.iter().map(|p| vec![p.duration, p.rms, p.max_modulus]).collect();
    io::write_table(&dir.join("sweep_td.csv"), &["t_d_s", "rms_V", "max_modulus_V"], &rows)?;
    for p in &points {
        println!("t_d = {:.4} ns  rms = {:.4e} V  max = {:.4e} V", p.duration * 1e9, p.rms, p.max_modulus);
    }
    let t: Vec<f64> = points.iter().map(|p| p.duration).collect();
    let rms: Vec<f64> = points.iter().map(|p| p.rms).collect();
    let max: Vec<f64> = points.iter().map(|p| p.max_modulus).collect();
    if points.len() >= 3 {
        let (k_rms, plateau_rms) = knee_point(&t, &rms)?;
        let (k_max, plateau_max) = knee_point(&t, &max)?;
        println!("knee (rms) = {:.4} ns, knee (max) = {:.4} ns", k_rms * 1e9, k_max * 1e9);
        io::write_metrics_csv(
            &dir.join("sweep_metrics.csv"),
            &[("knee_rms_s", k_rms), ("knee_max_s", k_max), ("plateau_rms_V", plateau_rms), ("plateau_max_V", plateau_max)],
        )?;
    }
    Ok(())
}

fn parse_direction(s: &str) -> Result<[f64; 3]> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("`{p}` in --direction is not a number")))
        .collect::<Result<_>>()?;
    let [x, y, z] = parts[..] else { bail!("--direction needs three components, got {}", parts.len()) };
    let n = (x * x + y * y + z * z).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        bail!("--direction must be a nonzero vector");
    }
    Ok([x / n, y / n, z / n])
}

fn cmd_materials(direction: &str, crystal: bool, format: Format) -> Result<()> {
    let d = parse_direction(direction)?;
    let m: MaterialSet = if crystal { gaas_constants() } else { gaas_device_frame() };
    let plain = christoffel_modes(&m, &d, false)?;
    let stiff = christoffel_modes(&m, &d, true)?;
    let mut out = std::io::stdout().lock();
    match format {
        Format::Text => {
            writeln!(out, "frame: {}", if crystal { "crystal (x=[100], y=[010], z=[001])" } else { "device (x=[011], y=[0-11], z=[100])" })?;
            writeln!(out, "C (Voigt, 1e10 Pa):")?;
            for row in m.elastic.voigt {
                writeln!(out, "  {}", row.map(|v| format!("{:8.4}", v / 1e10)).join(" "))?;
            }
            writeln!(out, "e (C/m^2):")?;
            for row in m.piezo.matrix {
                writeln!(out, "  {}", row.map(|v| format!("{:8.4}", v)).join(" "))?;
            }
            writeln!(out, "eps (F/m):")?;
            for row in m.permittivity.matrix {
                writeln!(out, "  {}", row.map(|v| format!("{:11.4e}", v)).join(" "))?;
            }
            writeln!(out, "rho = {} kg/m^3", m.density)?;
            writeln!(out, "direction = [{:.4}, {:.4}, {:.4}]", d[0], d[1], d[2])?;
            for (k, ((v, p), (vs, _))) in plain.iter().zip(&stiff).enumerate() {
                writeln!(
                    out,
                    "mode {k}: v = {v:.1} m/s, stiffened {vs:.1} m/s, polarization [{:.4}, {:.4}, {:.4}]",
                    p[0], p[1], p[2]
                )?;
            }
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["quantity", "i", "j", "value"])?;
            for (i, row) in m.elastic.voigt.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    w.write_record(["C_Pa".into(), (i + 1).to_string(), (j + 1).to_string(), io::format_f64(*v)])?;
                }
            }
            for (i, row) in m.piezo.matrix.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    w.write_record(["e_C_per_m2".into(), (i + 1).to_string(), (j + 1).to_string(), io::format_f64(*v)])?;
                }
            }
            for (i, row) in m.permittivity.matrix.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    w.write_record(["eps_F_per_m".into(), (i + 1).to_string(), (j + 1).to_string(), io::format_f64(*v)])?;
                }
            }
            for (k, ((v, _), (vs, _))) in plain.iter().zip(&stiff).enumerate() {
                w.write_record(["velocity_m_per_s".into(), (k + 1).to_string(), "0".into(), io::format_f64(*v)])?;
                w.write_record(["velocity_stiffened_m_per_s".into(), (k + 1).to_string(), "0".into(), io::format_f64(*vs)])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn cmd_qubit(trace: &Path, range: &[f64], points: usize, scale: f64, sign: f64, out: Option<PathBuf>) -> Result<()> {
    let table = io::read_table(trace)?;
    let col = |name: &str| {
        table.column(name).with_context(|| format!("{} has no `{name}` column", trace.display()))
    };
    let (t, p1, p2) = (col("t_s")?, col("phi1_V")?, col("phi2_V")?);
    if sign != 1.0 && sign != -1.0 {
        bail!("--charge-sign must be 1 or -1");
    }
    let eps = DetuningTrace::from_potentials(t, t, p1, p2, sign)?.scaled(scale);
    let curve = scenarios::infidelity_curve(&eps, range[0], range[1], points)?;
    match out {
        Some(path) => write_curve(&path, &curve)?,
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout().lock());
            w.write_record(["delta_ueV", "infidelity"])?;
            for (d, i) in &curve {
                w.write_record([io::format_f64(d * 1e6), io::format_f64(*i)])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn cmd_verify() -> Result<bool> {
    let checks = verify::run_all();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn cmd_describe(config: &Path, dump: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(config)?;
    let device = scenarios::build_device(&cfg)?;
    let mesh = &device.mesh;
    let [px, py, pz] = mesh.nodes_per_axis();
    println!("domain: {:e} x {:e} x {:e} m", mesh.extents[0], mesh.extents[1], mesh.extents[2]);
    println!("elements: {} x {} x {} = {}", mesh.divisions[0], mesh.divisions[1], mesh.divisions[2], mesh.element_count());
    println!("nodes: {px} x {py} x {pz} = {}", mesh.node_count());
    println!("spacing: {:e} {:e} {:e} m", mesh.spacing[0], mesh.spacing[1], mesh.spacing[2]);
    println!(
        "dofs: {} displacement ({} fixed), {} potential ({} fixed)",
        device.system.displacement_count(),
        device.displacement.fixed.len(),
        device.system.potential_count(),
        device.potential.partition.fixed.len()
    );
    if let Some(r) = &device.regions {
        let grounded: Vec<usize> = r.grounded().map(|g| g.len()).collect();
        println!(
            "gates: a = {:e} m, d = {:e} m; center {} nodes at x = {:e} m, grounded {:?} nodes",
            cfg.gates.width,
            cfg.gates.gap,
            r.center().len(),
            r.center_x(mesh),
            grounded
        );
    }
    let p = cfg.pulse;
    println!("pulse: A = {} V, t_r = {:e} s, t_d = {:e} s, t0 = {:e} s, ends at {:e} s", p.amplitude, p.rise, p.duration, p.start, p.end());
    let stable = device.stable_dt(cfg.time.safety);
    warn_if_clamped(&cfg, stable);
    let bound = cfg.time.dt.map_or(stable, |d| d.min(stable));
    let dt = aligned_dt(bound, cfg.probes.interval);
    println!("stable dt: {stable:e} s (safety {}); step used: {dt:e} s; steps: {}", cfg.time.safety, (cfg.time.t_end / dt - 1e-9).ceil());
    if let Some(dir) = dump {
        io::write_matrix_market(&dir.join("k_uu.mtx"), &device.system.k_uu)?;
        io::write_matrix_market(&dir.join("k_uphi.mtx"), &device.system.k_uphi)?;
        io::write_matrix_market(&dir.join("k_phiphi.mtx"), &device.system.k_phiphi)?;
        println!("wrote matrices to {}", dir.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, step_log, dt, out } => cmd_run(&config, step_log, dt, out).map(|_| true),
        Command::SweepTd { config, from, to, steps, settle, jobs, out } => {
            cmd_sweep(&config, from, to, steps, settle, jobs, out).map(|_| true)
        }
        Command::Materials { direction, crystal, format } => cmd_materials(&direction, crystal, format).map(|_| true),
        Command::Qubit { trace, delta_range, points, scale, charge_sign, out } => {
            cmd_qubit(&trace, &delta_range, points, scale, charge_sign, out).map(|_| true)
        }
        Command::Verify => cmd_verify(),
        Command::Describe { config, dump_matrices } => cmd_describe(&config, dump_matrices).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
