use gatepulse_core::linalg::Mat3;
use gatepulse_core::materials::*;
use gatepulse_core::probes::amplitude_metrics;
use gatepulse_core::pulse::TrapezoidalPulse;
use gatepulse_core::qubit::*;
use gatepulse_core::sparse::CsrMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn rotation(a: f64, b: f64, c: f64) -> Mat3 {
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let (sc, cc) = c.sin_cos();
    // z(a) · y(b) · z(c)
    [
        [ca * cb * cc - sa * sc, -ca * cb * sc - sa * cc, ca * sb],
        [sa * cb * cc + ca * sc, -sa * cb * sc + ca * cc, sa * sb],
        [-sb * cc, sb * sc, cb],
    ]
}

proptest! {
    #[test]
    fn rotated_tensors_stay_symmetric(a in 0.0..6.3f64, b in 0.0..3.15f64, c in 0.0..6.3f64) {
        let m = bond_rotate(&gaas_constants(), &CrystalOrientation::new(rotation(a, b, c)).unwrap()).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                prop_assert!((m.elastic.voigt[i][j] - m.elastic.voigt[j][i]).abs() <= 1e-6 * GAAS_C11 * 1e-9);
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let e = &m.permittivity.matrix;
                prop_assert!((e[i][j] - e[j][i]).abs() <= 1e-15 * e[0][0].abs().max(e[1][1]));
            }
        }
        // trace of C (11 + 22 + 33 + 2(44 + 55 + 66)) is rotation invariant
        let tr = |v: &[[f64; 6]; 6]| v[0][0] + v[1][1] + v[2][2] + 2.0 * (v[3][3] + v[4][4] + v[5][5]);
        prop_assert!((tr(&m.elastic.voigt) - tr(&gaas_constants().elastic.voigt)).abs() < 1e-9 * GAAS_C11);
    }

    #[test]
    fn csr_matches_dense(entries in proptest::collection::vec((0usize..7, 0usize..5, -10.0..10.0f64), 0..40),
                         x in proptest::collection::vec(-1.0..1.0f64, 5)) {
        let a = CsrMatrix::from_triplets(7, 5, &entries);
        let mut dense = vec![vec![0.0; 5]; 7];
        for &(r, c, v) in &entries {
            dense[r][c] += v;
        }
        let mut y = vec![0.0; 7];
        a.mul_vec(&x, &mut y);
        for r in 0..7 {
            let want: f64 = (0..5).map(|c| dense[r][c] * x[c]).sum();
            prop_assert!((y[r] - want).abs() < 1e-12);
            for c in 0..5 {
                prop_assert!((a.get(r, c) - dense[r][c]).abs() < 1e-12);
            }
        }
        prop_assert_eq!(a.transpose().transpose().to_dense(), a.to_dense());
    }

    #[test]
    fn metrics_ignore_reversal_and_sign(samples in proptest::collection::vec(-1e-3..1e-3f64, 1..60)) {
        let x: Vec<f64> = (0..samples.len()).map(|i| i as f64).collect();
        let m = amplitude_metrics(&x, &samples).unwrap();
        let reversed: Vec<f64> = samples.iter().rev().copied().collect();
        let negated: Vec<f64> = samples.iter().map(|v| -v).collect();
        let r = amplitude_metrics(&x, &reversed).unwrap();
        let n = amplitude_metrics(&x, &negated).unwrap();
        prop_assert_eq!(m.max_modulus, r.max_modulus);
        prop_assert!((m.rms - r.rms).abs() <= 1e-15 * m.rms.max(1e-300));
        prop_assert_eq!((m.rms, m.max_modulus), (n.rms, n.max_modulus));
        prop_assert!(m.rms <= m.max_modulus);
    }

    #[test]
    fn pulse_stays_in_bounds(amp in -5.0..5.0f64, rise in 1e-12..1e-10f64, dur in 0.0..1e-9f64,
                             start in 0.0..1e-9f64, t in -1e-9..4e-9f64) {
        let p = TrapezoidalPulse::new(amp, rise, dur, start).unwrap();
        let v = p.value(t);
        prop_assert!(v.abs() <= amp.abs() * (1.0 + 1e-12));
        prop_assert!(v * amp >= 0.0);
        if t < start || t > p.end() {
            prop_assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn infidelity_is_a_probability_and_phase_blind(
        amp in 0.0..20.0f64, delta in 0.1..30.0f64, theta in 0.0..6.3f64,
    ) {
        let times: Vec<f64> = (0..=200).map(|k| k as f64 * 5e-12).collect();
        let eps: Vec<f64> = times.iter().map(|t| micro_ev_to_rad_per_s(amp) * (1.7e10 * t).sin()).collect();
        let trace = DetuningTrace::new(times, eps).unwrap();
        let d = micro_ev_to_rad_per_s(delta);
        let cfg = QubitConfig::default();
        let a = infidelity(&trace, d, &cfg).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        let phase = Complex64::from_polar(1.0, theta);
        let shifted = QubitConfig { initial: [GROUND[0] * phase, GROUND[1] * phase], ..cfg };
        prop_assert!((a - infidelity(&trace, d, &shifted).unwrap()).abs() < 1e-14);
    }
}
