//! Oracle and invariant checks run by `gatepulse verify` and the acceptance suite.

use std::f64::consts::PI;

use anyhow::{ensure, Result};
use gatepulse_core::linalg::{Mat3, Vec3};
use gatepulse_core::materials::*;
use gatepulse_core::mesh::{build_box_mesh, BoxMesh, DofMap};
use gatepulse_core::pulse::{GateLayout, TrapezoidalPulse};
use gatepulse_core::solver::CgConfig;
use gatepulse_core::sparse::CsrMatrix;
use gatepulse_core::timeloop::{
    apply, run, run_from, Device, Forcing, RecordingPlan, RunParams, SimulationState, YFaces,
};
use gatepulse_core::assembly::{body_load, scalar_load};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    fn from_result(name: &'static str, r: Result<Check>) -> Self {
        r.unwrap_or_else(|e| Check::new(name, false, format!("error: {e:#}")))
    }
}

fn tight() -> CgConfig {
    CgConfig { tolerance: 1e-12, ..CgConfig::default() }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(f64::MIN_POSITIVE)
}

/// Christoffel velocities against the cubic closed forms.
pub fn christoffel() -> Result<Check> {
    let m = gaas_constants();
    let rho = GAAS_DENSITY;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let v100 = christoffel_velocities(&m, &[1.0, 0.0, 0.0], false)?;
    let v011 = christoffel_velocities(&m, &[0.0, s, s], false)?;
    let want100 = [(GAAS_C11 / rho).sqrt(), (GAAS_C44 / rho).sqrt(), (GAAS_C44 / rho).sqrt()];
    let want011 = [
        ((GAAS_C11 + GAAS_C12 + 2.0 * GAAS_C44) / (2.0 * rho)).sqrt(),
        (GAAS_C44 / rho).sqrt(),
        ((GAAS_C11 - GAAS_C12) / (2.0 * rho)).sqrt(),
    ];
    // device x is crystal [011]
    let dev = christoffel_velocities(&gaas_device_frame(), &[1.0, 0.0, 0.0], false)?;
    let ok = (0..3).all(|k| {
        rel_close(v100[k], want100[k], 1e-9) && rel_close(v011[k], want011[k], 1e-9) && rel_close(dev[k], want011[k], 1e-9)
    });
    Ok(Check::new(
        "christoffel",
        ok,
        format!("[100] {:.1?} m/s, [011] {:.1?} m/s", v100, v011),
    ))
}

const PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];

fn pair_index(i: usize, j: usize) -> usize {
    PAIRS.iter().position(|&(a, b)| (a, b) == (i, j) || (b, a) == (i, j)).unwrap_or(0)
}

fn euler_zyz(a: f64, b: f64, c: f64) -> Mat3 {
    let rz = |t: f64| [[t.cos(), -t.sin(), 0.0], [t.sin(), t.cos(), 0.0], [0.0, 0.0, 1.0]];
    let ry = |t: f64| [[t.cos(), 0.0, t.sin()], [0.0, 1.0, 0.0], [-t.sin(), 0.0, t.cos()]];
    let mul = |x: Mat3, y: Mat3| -> Mat3 {
        std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| x[i][k] * y[k][j]).sum()))
    };
    mul(mul(rz(a), ry(b)), rz(c))
}

/// 6×6 Bond rotation against explicit fourth/third/second-rank tensor rotation.
pub fn bond_rotation() -> Result<Check> {
    let m = gaas_constants();
    let c = |a: usize, b: usize, cc: usize, d: usize| m.elastic.voigt[pair_index(a, b)][pair_index(cc, d)];
    let e = |a: usize, b: usize, cc: usize| m.piezo.matrix[a][pair_index(b, cc)];
    let mut worst: f64 = 0.0;
    let angles = [0.0, 0.3, 1.1, 2.0, 2.9];
    for &a in &angles {
        for &b in &angles[..4] {
            let r = euler_zyz(a, b, 0.7 * a + 0.2);
            let rotated = bond_rotate(&m, &CrystalOrientation::new(r)?)?;
            let c_scale = GAAS_C11;
            for (row, &(i, j)) in PAIRS.iter().enumerate() {
                for (col, &(k, l)) in PAIRS.iter().enumerate() {
                    let mut s = 0.0;
                    for p in 0..3 {
                        for q in 0..3 {
                            for u in 0..3 {
                                for v in 0..3 {
                                    s += r[i][p] * r[j][q] * r[k][u] * r[l][v] * c(p, q, u, v);
                                }
                            }
                        }
                    }
                    worst = worst.max((rotated.elastic.voigt[row][col] - s).abs() / c_scale);
                }
            }
            for i in 0..3 {
                for (col, &(j, k)) in PAIRS.iter().enumerate() {
                    let mut s = 0.0;
                    for p in 0..3 {
                        for q in 0..3 {
                            for u in 0..3 {
                                s += r[i][p] * r[j][q] * r[k][u] * e(p, q, u);
                            }
                        }
                    }
                    worst = worst.max((rotated.piezo.matrix[i][col] - s).abs() / GAAS_E14.abs());
                }
                for j in 0..3 {
                    let mut s = 0.0;
                    for p in 0..3 {
                        for q in 0..3 {
                            s += r[i][p] * r[j][q] * m.permittivity.matrix[p][q];
                        }
                    }
                    worst = worst.max((rotated.permittivity.matrix[i][j] - s).abs() / m.permittivity.matrix[0][0]);
                }
            }
        }
    }
    Ok(Check::new("bond-rotation", worst < 1e-10, format!("max relative deviation {worst:.2e} over 20 rotations")))
}

/// Linear u and φ leave zero residual at every interior node.
pub fn patch_test() -> Result<Check> {
    let mesh = build_box_mesh([1.0e-6, 0.8e-6, 1.2e-6], [4, 3, 5])?;
    let dofs = DofMap::new(&mesh);
    let dev = Device::custom(mesh.clone(), dofs.clone(), gaas_device_frame(), &[0], &[])?;
    let g = [[1e-4, 2e-4, -1e-4], [0.5e-4, -3e-4, 1e-4], [2e-4, 1e-4, 0.7e-4]];
    let grad_phi = [0.3e6, -0.2e6, 0.5e6];
    let mut u = vec![0.0; dofs.displacement_count()];
    let mut phi = vec![0.0; dofs.potential_count()];
    for n in 0..mesh.node_count() {
        let p = mesh.node_position(n);
        for c in 0..3 {
            u[dofs.displacement(n, c)] = (0..3).map(|k| g[c][k] * p[k]).sum();
        }
        phi[dofs.potential(n)] = (0..3).map(|k| grad_phi[k] * p[k]).sum();
    }
    let sys = &dev.system;
    let kuu_u = apply(&sys.k_uu, &u);
    let kup_phi = apply(&sys.k_uphi, &phi);
    let kpp_phi = apply(&sys.k_phiphi, &phi);
    let kpu_u = apply(&sys.k_phiu, &u);
    let max = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let (su, sp) = (max(&kuu_u).max(max(&kup_phi)), max(&kpp_phi).max(max(&kpu_u)));
    let (mut ru, mut rp) = (0.0f64, 0.0f64);
    for n in 0..mesh.node_count() {
        let ijk = mesh.node_ijk(n);
        if (0..3).any(|a| ijk[a] == 0 || ijk[a] == mesh.divisions[a]) {
            continue;
        }
        for c in 0..3 {
            let d = dofs.displacement(n, c);
            ru = ru.max((kuu_u[d] + kup_phi[d]).abs() / su);
        }
        let d = dofs.potential(n);
        rp = rp.max((kpp_phi[d] - kpu_u[d]).abs() / sp);
    }
    Ok(Check::new(
        "patch-test",
        ru < 1e-10 && rp < 1e-10,
        format!("interior residual mechanical {ru:.1e}, electric {rp:.1e}"),
    ))
}

fn fitted_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Central difference on one free DOF against the exact harmonic solution.
pub fn oscillator_order() -> Result<Check> {
    let mesh = build_box_mesh([1e-7, 1e-7, 1e-7], [1, 1, 1])?;
    let dofs = DofMap::new(&mesh);
    let free_u = dofs.displacement(7, 0);
    let free_phi = dofs.potential(7);
    let fixed_u: Vec<usize> = (0..dofs.displacement_count()).filter(|&d| d != free_u).collect();
    let fixed_phi: Vec<usize> = (0..dofs.potential_count()).filter(|&d| d != free_phi).collect();
    let dev = Device::custom(mesh, dofs, gaas_device_frame(), &fixed_phi, &fixed_u)?;
    let sys = &dev.system;
    let kup = sys.k_uphi.get(free_u, free_phi);
    let k = sys.k_uu.get(free_u, free_u) + kup * kup / sys.k_phiphi.get(free_phi, free_phi);
    let w = (k / sys.mass[free_u]).sqrt();
    let t_end = 1.25 * 2.0 * PI / w;
    let u0 = 1e-11;
    let mut errors = Vec::new();
    for n in [40usize, 80, 160] {
        let dt = t_end / n as f64;
        let params = RunParams {
            pulse: TrapezoidalPulse::new(0.0, 0.025e-9, 0.1e-9, 0.0)?,
            t_end,
            dt: Some(dt),
            safety: 1.0,
            cg: tight(),
            recording: RecordingPlan { interval: t_end, line_depths: vec![], ..RecordingPlan::default() },
            ..RunParams::default()
        };
        let mut init = SimulationState::at_rest(sys.displacement_count(), sys.potential_count());
        init.u_curr[free_u] = u0;
        init.u_prev[free_u] = u0 * (w * dt).cos();
        let out = run_from(&dev, &params, init, None, |_, _| {})?;
        ensure!(rel_close(out.dt, dt, 1e-12), "step {} differs from requested {dt}", out.dt);
        errors.push((out.final_state.u_curr[free_u] - u0 * (w * t_end).cos()).abs() / u0);
    }
    let orders = fitted_orders(&errors);
    let ok = orders.iter().all(|o| (o - 2.0).abs() < 0.1);
    Ok(Check::new("oscillator-order", ok, format!("errors {:?}, orders {orders:.3?}", errors.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>())))
}

/// Relative spread of the staggered energy over the window after the pulse.
pub fn energy_drift_after(reports: &[gatepulse_core::timeloop::StepReport], from: f64) -> f64 {
    let e: Vec<f64> = reports.iter().filter(|r| r.time >= from).map(|r| r.energy).collect();
    if e.is_empty() {
        return f64::NAN;
    }
    let (lo, hi) = e.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mean = e.iter().sum::<f64>() / e.len() as f64;
    (hi - lo) / mean.abs()
}

/// Energy conservation on a small gated device once the gates return to 0 V.
pub fn energy_drift() -> Result<Check> {
    let hx = 100e-9;
    let mesh = build_box_mesh([2e-6, hx, 0.5e-6], [20, 1, 5])?;
    let dev = Device::gated(mesh, gaas_device_frame(), &GateLayout::new(200e-9, 200e-9)?, YFaces::Symmetric)?;
    let pulse = TrapezoidalPulse::new(1.0, 0.025e-9, 0.1e-9, 0.0)?;
    let off = pulse.end();
    let params = RunParams {
        pulse,
        t_end: off + 1e-9,
        cg: tight(),
        recording: RecordingPlan { interval: 0.05e-9, line_depths: vec![], ..RecordingPlan::default() },
        ..RunParams::default()
    };
    let out = run(&dev, &params)?;
    let drift = energy_drift_after(&out.reports, off + out.dt);
    Ok(Check::new("energy-drift", drift < 1e-6, format!("relative energy spread {drift:.2e} over 1 ns after pulse-off")))
}

fn parabolic_peak(x: &[f64], y: &[f64], k: usize) -> f64 {
    if k == 0 || k + 1 >= y.len() {
        return x[k];
    }
    let (a, b, c) = (y[k - 1], y[k], y[k + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom.abs() > 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    x[k] + shift * (x[k + 1] - x[k])
}

fn slope(t: &[f64], x: &[f64]) -> f64 {
    let n = t.len() as f64;
    let (mt, mx) = (t.iter().sum::<f64>() / n, x.iter().sum::<f64>() / n);
    let num: f64 = t.iter().zip(x).map(|(a, b)| (a - mt) * (b - mx)).sum();
    let den: f64 = t.iter().map(|a| (a - mt) * (a - mt)).sum();
    num / den
}

/// Measured speed of each plane-wave mode along device x with its
/// (piezo-stiffened) Christoffel velocity.
pub fn plane_wave_speeds() -> Result<Vec<(f64, f64)>> {
    let (nx, h) = (200usize, 10e-9);
    let length = nx as f64 * h;
    let mesh = build_box_mesh([length, h, h], [nx, 1, 1])?;
    let dofs = DofMap::periodic(&mesh, [true, true, true]);
    let m = gaas_device_frame();
    let dev = Device::custom(mesh.clone(), dofs.clone(), m.clone(), &[dofs.potential(0)], &[])?;
    let s = 20.0 * h / (2.0 * PI);
    let row: Vec<usize> = (0..nx).map(|i| mesh.node_index(i, 0, 0)).collect();
    let xs: Vec<f64> = row.iter().map(|&n| mesh.node_position(n)[0]).collect();
    let mut result = Vec::new();
    for (v, pol) in christoffel_modes(&m, &[1.0, 0.0, 0.0], true)? {
        let t_end = 0.25 * length / v;
        let interval = t_end / 5.0;
        let params = RunParams {
            pulse: TrapezoidalPulse::new(0.0, 0.025e-9, 0.1e-9, 0.0)?,
            t_end,
            cg: tight(),
            recording: RecordingPlan {
                interval,
                line_depths: vec![],
                snapshot_times: (1..=5).map(|k| k as f64 * interval).collect(),
                ..RecordingPlan::default()
            },
            ..RunParams::default()
        };
        let mut init = SimulationState::at_rest(dofs.displacement_count(), dofs.potential_count());
        for n in 0..mesh.node_count() {
            let x = mesh.node_position(n)[0];
            let g = (-(x - 0.5 * length).powi(2) / (2.0 * s * s)).exp();
            for c in 0..3 {
                init.u_curr[dofs.displacement(n, c)] = pol[c] * g;
            }
        }
        init.u_prev = init.u_curr.clone();
        let out = run_from(&dev, &params, init, None, |_, _| {})?;
        let mut times = Vec::new();
        let mut peaks = Vec::new();
        for snap in &out.snapshots {
            let proj: Vec<f64> = row
                .iter()
                .map(|&n| (0..3).map(|c| pol[c] * snap.u[dofs.displacement(n, c)]).sum())
                .collect();
            let start = nx / 2 + 1;
            let k = (start..nx).max_by(|&a, &b| proj[a].total_cmp(&proj[b])).unwrap_or(start);
            times.push(snap.time);
            peaks.push(parabolic_peak(&xs, &proj, k));
        }
        ensure!(times.len() >= 3, "only {} snapshots recorded", times.len());
        result.push((slope(&times, &peaks), v));
    }
    Ok(result)
}

pub fn plane_wave() -> Result<Check> {
    let speeds = plane_wave_speeds()?;
    let ok = speeds.iter().all(|&(got, want)| rel_close(got, want, 0.03));
    let detail = speeds
        .iter()
        .map(|(got, want)| format!("{got:.0} vs {want:.0} m/s ({:+.2}%)", 100.0 * (got / want - 1.0)))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(Check::new("plane-wave-speed", ok, detail))
}

/// Manufactured solution u* = A S(x) T(t), φ* = B S(x) T(t) on a unit cube with
/// S = Π sin(π x_j / L) and T = sin³(ωt), zero on the whole boundary.
pub struct Manufactured {
    pub length: f64,
    pub omega: f64,
    pub amp_u: Vec3,
    pub amp_phi: f64,
}

impl Default for Manufactured {
    fn default() -> Self {
        Self { length: 1e-6, omega: 2.0 * PI / 0.4e-9, amp_u: [1e-11, -0.5e-11, 0.7e-11], amp_phi: 0.5 }
    }
}

impl Manufactured {
    pub const T_END: f64 = 0.3e-9;

    fn time(&self, t: f64) -> f64 {
        (self.omega * t).sin().powi(3)
    }

    fn time_dd(&self, t: f64) -> f64 {
        let (s, c) = (self.omega * t).sin_cos();
        self.omega * self.omega * (6.0 * s * c * c - 3.0 * s * s * s)
    }

    fn space(&self, p: &Vec3) -> f64 {
        p.iter().map(|x| (PI * x / self.length).sin()).product()
    }

    fn hessian(&self, p: &Vec3) -> Mat3 {
        let k = PI / self.length;
        let s: Vec3 = std::array::from_fn(|j| (k * p[j]).sin());
        let c: Vec3 = std::array::from_fn(|j| (k * p[j]).cos());
        std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                if i == j {
                    -k * k * s[0] * s[1] * s[2]
                } else {
                    let other = 3 - i - j;
                    k * k * c[i] * c[j] * s[other]
                }
            })
        })
    }

    fn forcing(&self, mesh: &BoxMesh, dofs: &DofMap, m: &MaterialSet) -> ManufacturedForcing {
        let a = self.amp_u;
        let b = self.amp_phi;
        let inertia = body_load(mesh, dofs, |p| {
            let s = self.space(p);
            std::array::from_fn(|i| m.density * a[i] * s)
        });
        let stiffness = body_load(mesh, dofs, |p| {
            let hs = self.hessian(p);
            std::array::from_fn(|i| {
                let mut div = 0.0;
                for j in 0..3 {
                    for k in 0..3 {
                        for l in 0..3 {
                            div += m.elastic.full(i, j, k, l) * a[k] * hs[j][l];
                        }
                        div += m.piezo.full(k, i, j) * b * hs[j][k];
                    }
                }
                -div
            })
        });
        let charge = scalar_load(mesh, dofs, |p| {
            let hs = self.hessian(p);
            let mut rho = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        rho += m.piezo.full(i, k, j) * a[k] * hs[i][j];
                    }
                    rho -= m.permittivity.matrix[i][j] * b * hs[i][j];
                }
            }
            rho
        });
        ManufacturedForcing { shape: Manufactured { amp_u: a, ..*self }, inertia, stiffness, charge }
    }

    /// Relative RMS nodal errors (u, φ) at `T_END` on an n³ mesh with `steps` steps.
    pub fn solve(&self, n: usize, steps: usize) -> Result<(Vec<f64>, Vec<f64>, BoxMesh, DofMap)> {
        let mesh = build_box_mesh([self.length; 3], [n; 3])?;
        let dofs = DofMap::new(&mesh);
        let boundary: Vec<usize> = (0..mesh.node_count())
            .filter(|&node| {
                let ijk = mesh.node_ijk(node);
                (0..3).any(|a| ijk[a] == 0 || ijk[a] == n)
            })
            .collect();
        let fixed_phi: Vec<usize> = boundary.iter().map(|&b| dofs.potential(b)).collect();
        let fixed_u: Vec<usize> = boundary.iter().flat_map(|&b| (0..3).map(move |c| (b, c))).map(|(b, c)| dofs.displacement(b, c)).collect();
        let m = gaas_device_frame();
        let dev = Device::custom(mesh.clone(), dofs.clone(), m.clone(), &fixed_phi, &fixed_u)?;
        let dt = Self::T_END / steps as f64;
        ensure!(dt <= dev.stable_dt(1.0), "{steps} steps exceed the stability bound on {n}³");
        let forcing = self.forcing(&mesh, &dofs, &m);
        let params = RunParams {
            pulse: TrapezoidalPulse::new(0.0, 0.025e-9, 0.1e-9, 0.0)?,
            t_end: Self::T_END,
            dt: Some(dt),
            safety: 1.0,
            cg: CgConfig { tolerance: 1e-13, ..CgConfig::default() },
            recording: RecordingPlan { interval: Self::T_END, line_depths: vec![], ..RecordingPlan::default() },
            ..RunParams::default()
        };
        let mut init = SimulationState::at_rest(dofs.displacement_count(), dofs.potential_count());
        let back = self.time(-dt);
        for node in 0..mesh.node_count() {
            let s = self.space(&mesh.node_position(node));
            for c in 0..3 {
                init.u_prev[dofs.displacement(node, c)] = self.amp_u[c] * s * back;
            }
        }
        let out = run_from(&dev, &params, init, Some(&forcing), |_, _| {})?;
        ensure!(rel_close(out.dt, dt, 1e-12) && out.steps == steps, "run used {} steps of {}", out.steps, out.dt);
        Ok((out.final_state.u_curr, out.final_state.phi, mesh, dofs))
    }

    fn exact_errors(&self, u: &[f64], phi: &[f64], mesh: &BoxMesh, dofs: &DofMap) -> (f64, f64) {
        let tt = self.time(Self::T_END);
        let (mut eu, mut nu, mut ep, mut np) = (0.0, 0.0, 0.0, 0.0);
        for node in 0..mesh.node_count() {
            let s = self.space(&mesh.node_position(node)) * tt;
            for c in 0..3 {
                let want = self.amp_u[c] * s;
                eu += (u[dofs.displacement(node, c)] - want).powi(2);
                nu += want * want;
            }
            let want = self.amp_phi * s;
            ep += (phi[dofs.potential(node)] - want).powi(2);
            np += want * want;
        }
        ((eu / nu).sqrt(), (ep / np).sqrt())
    }
}

struct ManufacturedForcing {
    shape: Manufactured,
    inertia: Vec<f64>,
    stiffness: Vec<f64>,
    charge: Vec<f64>,
}

impl Forcing for ManufacturedForcing {
    fn mechanical(&self, t: f64, out: &mut [f64]) {
        let (tdd, tt) = (self.shape.time_dd(t), self.shape.time(t));
        for ((o, a), b) in out.iter_mut().zip(&self.inertia).zip(&self.stiffness) {
            *o = a * tdd + b * tt;
        }
    }

    fn charge(&self, t: f64, out: &mut [f64]) {
        let tt = self.shape.time(t);
        for (o, q) in out.iter_mut().zip(&self.charge) {
            *o = q * tt;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Convergence {
    /// (n, u error, φ error) with Δt refined alongside h
    pub space: Vec<(usize, f64, f64)>,
    /// (steps, u error, φ error) on a fixed mesh against a fine-step reference
    pub time: Vec<(usize, f64, f64)>,
}

impl Convergence {
    pub fn space_orders(&self) -> (Vec<f64>, Vec<f64>) {
        let u: Vec<f64> = self.space.iter().map(|r| r.1).collect();
        let p: Vec<f64> = self.space.iter().map(|r| r.2).collect();
        (fitted_orders(&u), fitted_orders(&p))
    }

    pub fn time_orders(&self) -> (Vec<f64>, Vec<f64>) {
        let u: Vec<f64> = self.time.iter().map(|r| r.1).collect();
        let p: Vec<f64> = self.time.iter().map(|r| r.2).collect();
        (fitted_orders(&u), fitted_orders(&p))
    }
}

pub fn manufactured_convergence() -> Result<Convergence> {
    let ms = Manufactured::default();
    let mut space = Vec::new();
    for n in [8usize, 16, 32] {
        let (u, phi, mesh, dofs) = ms.solve(n, 4 * n)?;
        let (eu, ep) = ms.exact_errors(&u, &phi, &mesh, &dofs);
        space.push((n, eu, ep));
    }
    let n = 8;
    let (u_ref, phi_ref, ..) = ms.solve(n, 2048)?;
    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    let mut time = Vec::new();
    for steps in [32usize, 64, 128] {
        let (u, phi, ..) = ms.solve(n, steps)?;
        let du: Vec<f64> = u.iter().zip(&u_ref).map(|(a, b)| a - b).collect();
        let dp: Vec<f64> = phi.iter().zip(&phi_ref).map(|(a, b)| a - b).collect();
        time.push((steps, rms(&du) / rms(&u_ref), rms(&dp) / rms(&phi_ref)));
    }
    Ok(Convergence { space, time })
}

pub fn convergence() -> Result<Check> {
    let c = manufactured_convergence()?;
    let (su, sp) = c.space_orders();
    let (tu, tp) = c.time_orders();
    let min = su.iter().chain(&sp).chain(&tu).chain(&tp).fold(f64::INFINITY, |m, &o| m.min(o));
    Ok(Check::new(
        "convergence-order",
        min >= 1.8,
        format!("h orders u {su:.2?} φ {sp:.2?}; Δt orders u {tu:.2?} φ {tp:.2?}"),
    ))
}

/// Every check `gatepulse verify` runs, in order.
pub fn run_all() -> Vec<Check> {
    vec![
        Check::from_result("christoffel", christoffel()),
        Check::from_result("bond-rotation", bond_rotation()),
        Check::from_result("patch-test", patch_test()),
        Check::from_result("oscillator-order", oscillator_order()),
        Check::from_result("energy-drift", energy_drift()),
        Check::from_result("plane-wave-speed", plane_wave()),
        Check::from_result("convergence-order", convergence()),
    ]
}

/// Matrix used by [`patch_test`]; exposed for dumping.
pub fn patch_stiffness() -> Result<CsrMatrix> {
    let mesh = build_box_mesh([1.0e-6, 0.8e-6, 1.2e-6], [4, 3, 5])?;
    let dofs = DofMap::new(&mesh);
    Ok(Device::custom(mesh, dofs, gaas_device_frame(), &[0], &[])?.system.k_uu)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cheap_checks_pass() {
        for c in [christoffel(), bond_rotation(), patch_test(), oscillator_order()] {
            let c = c.unwrap();
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn manufactured_hessian_matches_finite_differences() {
        let ms = Manufactured::default();
        let p = [0.31e-6, 0.47e-6, 0.66e-6];
        let h = 1e-9;
        let hs = ms.hessian(&p);
        for i in 0..3 {
            for j in 0..3 {
                let shift = |di: f64, dj: f64| {
                    let mut q = p;
                    q[i] += di;
                    q[j] += dj;
                    ms.space(&q)
                };
                let fd = (shift(h, h) - shift(h, -h) - shift(-h, h) + shift(-h, -h)) / (4.0 * h * h);
                assert!((fd - hs[i][j]).abs() < 1e-5 * (PI / ms.length).powi(2), "{i}{j}: {fd} vs {}", hs[i][j]);
            }
        }
        let t = 0.137e-9;
        let dt = 1e-15;
        let fd = (ms.time(t + dt) - 2.0 * ms.time(t) + ms.time(t - dt)) / (dt * dt);
        assert!((fd - ms.time_dd(t)).abs() < 1e-5 * ms.omega * ms.omega);
    }
}
