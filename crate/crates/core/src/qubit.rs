//! Two-level charge qubit driven by the detuning between two dot potentials.
//!
//! H(t) = (ħ/2)(ε(t) σz + Δ σx) with ε = q(φ1 − φ2)/ħ. The state is
//! integrated with classical RK4 on the recorded detuning (linearly
//! interpolated) and compared with the ε = 0 reference evolution.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::probes::interpolate;

pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const HBAR: f64 = 1.054_571_817e-34;

/// Convert an energy in µeV to an angular frequency in rad/s.
pub fn micro_ev_to_rad_per_s(e: f64) -> f64 {
    e * 1e-6 * ELEMENTARY_CHARGE / HBAR
}

pub fn rad_per_s_to_micro_ev(w: f64) -> f64 {
    w * HBAR / (1e-6 * ELEMENTARY_CHARGE)
}

pub type TwoLevelState = [Complex64; 2];

pub const GROUND: TwoLevelState = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];

/// Detuning ε(t) in rad/s on a strictly increasing time base.
#[derive(Debug, Clone, PartialEq)]
pub struct DetuningTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl DetuningTrace {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::TimeBaseMismatch("times and detuning differ in length".into()));
        }
        if times.len() < 2 {
            return Err(Error::InvalidArgument("detuning trace needs at least two samples".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("detuning times must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("detuning contains non-finite values".into()));
        }
        Ok(Self { times, values })
    }

    /// ε = s·q(φ1 − φ2)/ħ from two potential traces sharing a time base,
    /// with `sign` = ±1 the sign of the carrier charge relative to +q.
    pub fn from_potentials(times: &[f64], t2: &[f64], phi1: &[f64], phi2: &[f64], sign: f64) -> Result<Self> {
        if sign != 1.0 && sign != -1.0 {
            return Err(Error::InvalidArgument(alloc::format!("charge sign must be +1 or -1, got {sign}")));
        }
        if times != t2 {
            return Err(Error::TimeBaseMismatch("dot traces are sampled at different times".into()));
        }
        if phi1.len() != times.len() || phi2.len() != times.len() {
            return Err(Error::TimeBaseMismatch("potential and time arrays differ in length".into()));
        }
        let values = phi1.iter().zip(phi2).map(|(a, b)| sign * detuning(*a, *b)).collect();
        Self::new(times.to_vec(), values)
    }

    pub fn constant(t_end: f64, value: f64) -> Self {
        Self { times: alloc::vec![0.0, t_end], values: alloc::vec![value, value] }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { times: self.times.clone(), values: self.values.iter().map(|v| v * s).collect() }
    }

    pub fn at(&self, t: f64) -> f64 {
        interpolate(&self.times, &self.values, t)
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Common sample spacing, if the samples are uniform to 1e-6 relative.
    pub fn uniform_spacing(&self) -> Option<f64> {
        let h = (self.end() - self.start()) / (self.times.len() - 1) as f64;
        self.times.windows(2).all(|w| libm::fabs(w[1] - w[0] - h) <= 1e-6 * h).then_some(h)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m: f64, v| m.max(libm::fabs(*v)))
    }
}

pub fn detuning(phi1: f64, phi2: f64) -> f64 {
    ELEMENTARY_CHARGE * (phi1 - phi2) / HBAR
}

/// Two dots on a line along x, centered `distance` from the source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DotPair {
    /// center-to-center, m
    pub separation: f64,
    /// from the source to the pair center, m
    pub distance: f64,
    /// below the top face, m
    pub depth: f64,
}

impl Default for DotPair {
    fn default() -> Self {
        Self { separation: 200e-9, distance: 5e-6, depth: 100e-9 }
    }
}

impl DotPair {
    pub fn new(separation: f64, distance: f64, depth: f64) -> Result<Self> {
        if !(separation > 0.0) || !(distance >= 0.0) || !(depth >= 0.0) {
            return Err(Error::InvalidArgument("dot separation must be positive, distance and depth non-negative".into()));
        }
        Ok(Self { separation, distance, depth })
    }

    /// x of the near and far dot for a source at `source_x`, on the +x side.
    pub fn x_positions(&self, source_x: f64) -> (f64, f64) {
        let c = source_x + self.distance;
        (c - 0.5 * self.separation, c + 0.5 * self.separation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitConfig {
    /// Fixed step; `None` picks 400 steps per fastest period, aligned to the
    /// sample spacing of a uniformly sampled trace.
    pub dt: Option<f64>,
    pub norm_tolerance: f64,
    pub initial: TwoLevelState,
}

impl Default for QubitConfig {
    fn default() -> Self {
        Self { dt: None, norm_tolerance: 1e-8, initial: GROUND }
    }
}

fn norm_sq(psi: &TwoLevelState) -> f64 {
    psi[0].norm_sqr() + psi[1].norm_sqr()
}

fn rhs(eps: f64, delta: f64, psi: &TwoLevelState) -> TwoLevelState {
    // −(i/2)(ε σz + Δ σx) ψ
    let mi = Complex64::new(0.0, -0.5);
    [mi * (eps * psi[0] + delta * psi[1]), mi * (delta * psi[0] - eps * psi[1])]
}

fn axpy(psi: &TwoLevelState, h: f64, k: &TwoLevelState) -> TwoLevelState {
    [psi[0] + k[0] * h, psi[1] + k[1] * h]
}

fn step_count(trace: &DetuningTrace, delta: f64, dt: Option<f64>) -> Result<(usize, f64)> {
    let span = trace.end() - trace.start();
    let dt_auto = dt.is_none();
    let dt = match dt {
        Some(dt) if dt > 0.0 && dt.is_finite() => dt,
        Some(dt) => return Err(Error::InvalidArgument(alloc::format!("qubit dt must be positive, got {dt}"))),
        None => {
            let m = trace.max_abs();
            let w = libm::sqrt(m * m + delta * delta);
            if w == 0.0 {
                span
            } else {
                2.0 * core::f64::consts::PI / (400.0 * w)
            }
        }
    };
    if dt_auto {
        if let Some(spacing) = trace.uniform_spacing() {
            // keep every step inside one linear segment of the trace
            let per = libm::ceil(spacing / dt - 1e-9).max(1.0) as usize;
            let n = per * (trace.times.len() - 1);
            return Ok((n, span / n as f64));
        }
    }
    let n = libm::ceil(span / dt - 1e-9).max(1.0) as usize;
    Ok((n, span / n as f64))
}

/// Integrate from the start to the end of `trace`; returns the final state.
pub fn evolve(trace: &DetuningTrace, delta: f64, config: &QubitConfig) -> Result<TwoLevelState> {
    let (n, h) = step_count(trace, delta, config.dt)?;
    let mut psi = config.initial;
    let mut t = trace.start();
    let mut last_norm = norm_sq(&psi);
    for step in 1..=n {
        let e0 = trace.at(t);
        let em = trace.at(t + 0.5 * h);
        let e1 = trace.at(t + h);
        let k1 = rhs(e0, delta, &psi);
        let k2 = rhs(em, delta, &axpy(&psi, 0.5 * h, &k1));
        let k3 = rhs(em, delta, &axpy(&psi, 0.5 * h, &k2));
        let k4 = rhs(e1, delta, &axpy(&psi, h, &k3));
        for c in 0..2 {
            psi[c] += (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]) * (h / 6.0);
        }
        t = trace.start() + step as f64 * h;
        let nrm = norm_sq(&psi);
        let drift = libm::fabs(nrm - last_norm);
        if !(drift <= config.norm_tolerance) {
            return Err(Error::NormDrift { step, drift });
        }
        last_norm = nrm;
    }
    Ok(psi)
}

/// exp(−i Δ σx t / 2) ψ0.
pub fn reference_state(initial: &TwoLevelState, delta: f64, t: f64) -> TwoLevelState {
    let c = libm::cos(0.5 * delta * t);
    let s = libm::sin(0.5 * delta * t);
    let mis = Complex64::new(0.0, -s);
    [initial[0] * c + initial[1] * mis, initial[0] * mis + initial[1] * c]
}

pub fn fidelity(a: &TwoLevelState, b: &TwoLevelState) -> f64 {
    let overlap = a[0].conj() * b[0] + a[1].conj() * b[1];
    overlap.norm_sqr() / (norm_sq(a) * norm_sq(b))
}

/// 1 − |⟨ψ_ref|ψ⟩|² at the end of the trace.
pub fn infidelity(trace: &DetuningTrace, delta: f64, config: &QubitConfig) -> Result<f64> {
    let psi = evolve(trace, delta, config)?;
    let reference = reference_state(&config.initial, delta, trace.end() - trace.start());
    Ok((1.0 - fidelity(&reference, &psi)).max(0.0))
}

/// `n` logarithmically spaced values on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo) || n == 0 {
        return Err(Error::InvalidArgument("log grid needs 0 < lo <= hi and n >= 1".into()));
    }
    if n == 1 {
        return Ok(alloc::vec![lo]);
    }
    let (a, b) = (libm::log(lo), libm::log(hi));
    Ok((0..n).map(|k| libm::exp(a + (b - a) * k as f64 / (n - 1) as f64)).collect())
}

/// Infidelity for each tunnel coupling in `deltas` (rad/s).
pub fn sweep_delta(trace: &DetuningTrace, deltas: &[f64], config: &QubitConfig) -> Result<Vec<(f64, f64)>> {
    deltas.iter().map(|&d| infidelity(trace, d, config).map(|i| (d, i))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn microvolt_detuning() {
        let e = detuning(1e-6, 0.0);
        assert!((e - 1.519e9).abs() < 1e6, "{e}");
        assert!((rad_per_s_to_micro_ev(micro_ev_to_rad_per_s(3.7)) - 3.7).abs() < 1e-12);
    }

    #[test]
    fn rabi_oscillation() {
        let delta = 2e9;
        let t = 3.1e-9;
        let psi = evolve(&DetuningTrace::constant(t, 0.0), delta, &QubitConfig::default()).unwrap();
        let p1 = psi[1].norm_sqr();
        let expected = libm::sin(0.5 * delta * t).powi(2);
        assert!((p1 - expected).abs() < 1e-9, "{p1} vs {expected}");
    }

    #[test]
    fn zero_detuning_has_zero_infidelity() {
        let r = infidelity(&DetuningTrace::constant(2e-9, 0.0), 5e9, &QubitConfig::default()).unwrap();
        assert!(r < 1e-12);
    }

    #[test]
    fn pure_dephasing_phase() {
        let eps = 3e9;
        let t = 1e-9;
        let plus = [Complex64::new(libm::sqrt(0.5), 0.0), Complex64::new(libm::sqrt(0.5), 0.0)];
        let cfg = QubitConfig { initial: plus, ..Default::default() };
        let psi = evolve(&DetuningTrace::constant(t, eps), 0.0, &cfg).unwrap();
        let rel = psi[1] / psi[0];
        assert!((rel.arg() - wrap(eps * t)).abs() < 1e-8);
        let inf = infidelity(&DetuningTrace::constant(t, eps), 0.0, &cfg).unwrap();
        assert!((inf - libm::sin(0.5 * eps * t).powi(2)).abs() < 1e-9);
    }

    fn wrap(a: f64) -> f64 {
        let two_pi = 2.0 * core::f64::consts::PI;
        let r = a.rem_euclid(two_pi);
        if r > core::f64::consts::PI {
            r - two_pi
        } else {
            r
        }
    }

    #[test]
    fn weak_noise_scales_quadratically() {
        let times: Vec<f64> = (0..=200).map(|k| k as f64 * 1e-11).collect();
        let values: Vec<f64> = times.iter().map(|&t| 1e8 * libm::sin(7e9 * t)).collect();
        let trace = DetuningTrace::new(times, values).unwrap();
        let cfg = QubitConfig::default();
        let a = infidelity(&trace.scaled(0.01), 3e9, &cfg).unwrap();
        let b = infidelity(&trace.scaled(0.02), 3e9, &cfg).unwrap();
        assert!((b / a - 4.0).abs() < 0.01, "{}", b / a);
    }

    #[test]
    fn fourth_order_convergence() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 2e-11).collect();
        let values: Vec<f64> = times.iter().map(|&t| 2e9 * libm::cos(3e9 * t)).collect();
        let trace = DetuningTrace::new(times, values).unwrap();
        let run = |dt: f64| evolve(&trace, 4e9, &QubitConfig { dt: Some(dt), ..Default::default() }).unwrap();
        let fine = run(2.5e-14);
        let err = |dt: f64| {
            let p = run(dt);
            ((p[0] - fine[0]).norm_sqr() + (p[1] - fine[1]).norm_sqr()).sqrt()
        };
        // piecewise-linear ε: keep steps aligned with the samples
        let e1 = err(4e-12);
        let e2 = err(2e-12);
        let order = libm::log2(e1 / e2);
        assert!(order > 3.7, "order {order}");
    }

    #[test]
    fn norm_drift_is_caught() {
        let cfg = QubitConfig { dt: Some(1e-9), ..Default::default() };
        let err = evolve(&DetuningTrace::constant(1e-8, 0.0), 5e10, &cfg).unwrap_err();
        assert!(matches!(err, Error::NormDrift { .. }));
    }

    #[test]
    fn mismatched_time_bases_rejected() {
        let err = DetuningTrace::from_potentials(&[0.0, 1.0], &[0.0, 2.0], &[0.0; 2], &[0.0; 2], 1.0).unwrap_err();
        assert!(matches!(err, Error::TimeBaseMismatch(_)));
        assert!(DetuningTrace::new(alloc::vec![0.0, 0.0], alloc::vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn charge_sign_flips_detuning() {
        let t = [0.0, 1e-9];
        let a = DetuningTrace::from_potentials(&t, &t, &[1e-6, 2e-6], &[0.0; 2], 1.0).unwrap();
        let b = DetuningTrace::from_potentials(&t, &t, &[1e-6, 2e-6], &[0.0; 2], -1.0).unwrap();
        assert_eq!(a.values[1], -b.values[1]);
        assert!(DetuningTrace::from_potentials(&t, &t, &[0.0; 2], &[0.0; 2], 0.5).is_err());
        let same = DetuningTrace::from_potentials(&t, &t, &[3e-6; 2], &[3e-6; 2], 1.0).unwrap();
        assert!(same.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dot_positions() {
        let (a, b) = DotPair::default().x_positions(8e-6);
        assert!((a - 12.9e-6).abs() < 1e-15 && (b - 13.1e-6).abs() < 1e-15);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(0.1, 30.0, 5).unwrap();
        assert!((g[0] - 0.1).abs() < 1e-15 && (g[4] - 30.0).abs() < 1e-12);
        assert!(log_grid(0.0, 1.0, 3).is_err());
    }
}
