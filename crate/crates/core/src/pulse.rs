//! Trapezoidal gate pulse and the Dirichlet values it imposes on the gates.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mesh::{DofMap, SurfaceRegionSet};

/// Symmetric trapezoid: ramp up over `rise`, hold `amplitude` for `duration`,
/// ramp down over `rise`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapezoidalPulse {
    /// volts
    pub amplitude: f64,
    /// seconds
    pub rise: f64,
    /// plateau length, seconds
    pub duration: f64,
    /// onset, seconds
    pub start: f64,
}

impl Default for TrapezoidalPulse {
    fn default() -> Self {
        Self { amplitude: 1.0, rise: 0.025e-9, duration: 0.3e-9, start: 0.0 }
    }
}

impl TrapezoidalPulse {
    pub fn new(amplitude: f64, rise: f64, duration: f64, start: f64) -> Result<Self> {
        if !(rise >= 0.0) || !(duration >= 0.0) {
            return Err(Error::InvalidArgument(alloc::format!(
                "pulse rise ({rise}) and duration ({duration}) must be non-negative"
            )));
        }
        if !amplitude.is_finite() || !start.is_finite() {
            return Err(Error::InvalidArgument("pulse amplitude and start must be finite".into()));
        }
        Ok(Self { amplitude, rise, duration, start })
    }

    /// Time at which the waveform returns to zero.
    pub fn end(&self) -> f64 {
        self.start + 2.0 * self.rise + self.duration
    }

    pub fn value(&self, t: f64) -> f64 {
        pulse_value(self, t)
    }
}

pub fn pulse_value(p: &TrapezoidalPulse, t: f64) -> f64 {
    let up_end = p.start + p.rise;
    let down_start = up_end + p.duration;
    let down_end = down_start + p.rise;
    if t < p.start {
        0.0
    } else if t < up_end {
        p.amplitude * (t - p.start) / p.rise
    } else if t <= down_start {
        p.amplitude
    } else if t < down_end {
        p.amplitude * (down_end - t) / p.rise
    } else {
        0.0
    }
}

/// Three gates of width `width` separated edge-to-edge by `gap`, centered on
/// the top face. The central gate is driven, the outer pair is grounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateLayout {
    /// meters
    pub width: f64,
    /// meters
    pub gap: f64,
}

impl Default for GateLayout {
    fn default() -> Self {
        Self { width: 250e-9, gap: 250e-9 }
    }
}

impl GateLayout {
    pub fn new(width: f64, gap: f64) -> Result<Self> {
        if !(width > 0.0) || !(gap > 0.0) {
            return Err(Error::InvalidArgument(alloc::format!(
                "gate width ({width}) and gap ({gap}) must be positive"
            )));
        }
        Ok(Self { width, gap })
    }
}

/// Potential Dirichlet values at time `t`: driven gate at the pulse value,
/// grounded gates at zero. Order is fixed (center nodes, then outer nodes),
/// so the list length never changes with time.
pub fn gate_values(regions: &SurfaceRegionSet, dofs: &DofMap, p: &TrapezoidalPulse, t: f64) -> Vec<(usize, f64)> {
    let v = pulse_value(p, t);
    let mut out = Vec::with_capacity(regions.total_nodes());
    for &n in regions.center() {
        out.push((dofs.potential(n), v));
    }
    for region in regions.grounded() {
        for &n in region {
            out.push((dofs.potential(n), 0.0));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_box_mesh, tag_gates};

    const NS: f64 = 1e-9;

    fn default_pulse() -> TrapezoidalPulse {
        TrapezoidalPulse::new(1.0, 0.025 * NS, 0.3 * NS, 0.0).unwrap()
    }

    #[test]
    fn waveform_samples() {
        let p = default_pulse();
        assert_eq!(pulse_value(&p, 0.0), 0.0);
        assert!((pulse_value(&p, 0.025 * NS) - 1.0).abs() < 1e-12);
        assert!((pulse_value(&p, 0.0125 * NS) - 0.5).abs() < 1e-12);
        assert_eq!(pulse_value(&p, 0.2 * NS), 1.0);
        assert!((pulse_value(&p, 0.3375 * NS) - 0.5).abs() < 1e-12);
        assert!(pulse_value(&p, 0.35 * NS).abs() < 1e-12);
        assert_eq!(pulse_value(&p, 0.36 * NS), 0.0);
        assert_eq!(pulse_value(&p, -1.0), 0.0);
        assert!((p.end() - 0.35 * NS).abs() < 1e-22);
    }

    #[test]
    fn ideal_step() {
        let p = TrapezoidalPulse::new(2.0, 0.0, 1.0, 0.5).unwrap();
        assert_eq!(pulse_value(&p, 0.4999), 0.0);
        assert_eq!(pulse_value(&p, 0.5), 2.0);
        assert_eq!(pulse_value(&p, 1.5), 2.0);
        assert_eq!(pulse_value(&p, 1.5000001), 0.0);
    }

    #[test]
    fn rejects_negative_times() {
        assert!(TrapezoidalPulse::new(1.0, -1e-9, 0.0, 0.0).is_err());
        assert!(TrapezoidalPulse::new(1.0, 0.0, -1e-9, 0.0).is_err());
        assert!(GateLayout::new(0.0, 1.0).is_err());
    }

    #[test]
    fn trapezoid_area_by_quadrature() {
        let p = TrapezoidalPulse::new(1.5, 0.025 * NS, 0.3 * NS, 0.1 * NS).unwrap();
        // piecewise-linear: the trapezoid rule is exact on a grid containing the kinks
        let knots = [0.0, p.start, p.start + p.rise, p.start + p.rise + p.duration, p.end(), p.end() + NS];
        let mut area = 0.0;
        for w in knots.windows(2) {
            let n = 64;
            let h = (w[1] - w[0]) / n as f64;
            for k in 0..n {
                let a = w[0] + k as f64 * h;
                area += 0.5 * h * (pulse_value(&p, a) + pulse_value(&p, a + h));
            }
        }
        let expected = p.amplitude * (p.duration + p.rise);
        assert!((area - expected).abs() <= 1e-12 * expected, "{area} vs {expected}");
    }

    #[test]
    fn continuity_bound() {
        let p = default_pulse();
        let dt = 1e-3 * NS;
        let mut t = -0.01 * NS;
        while t < 0.4 * NS {
            let jump = (pulse_value(&p, t + dt) - pulse_value(&p, t)).abs();
            assert!(jump <= p.amplitude * dt / p.rise * (1.0 + 1e-9));
            t += dt;
        }
    }

    #[test]
    fn gate_values_follow_pulse() {
        let mesh = build_box_mesh([4e-6, 50e-9, 1e-6], [80, 1, 20]).unwrap();
        let dofs = DofMap::new(&mesh);
        let regions = tag_gates(&mesh, &GateLayout::default()).unwrap();
        let p = default_pulse();
        let before = gate_values(&regions, &dofs, &p, -1.0);
        assert!(before.iter().all(|&(_, v)| v == 0.0));
        let on = gate_values(&regions, &dofs, &p, 0.2 * NS);
        assert_eq!(on.len(), before.len());
        let centers: Vec<_> = regions.center().iter().map(|&n| dofs.potential(n)).collect();
        for (dof, v) in on {
            if centers.contains(&dof) {
                assert_eq!(v, 1.0);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }
}
