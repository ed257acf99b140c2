use lwa_core::alloc::waterfill;
use lwa_core::experiments::fmt_float;
use lwa_core::linalg::eigh;
use lwa_core::lwa::{aperture_gain, beam_angle, frequency_of_angle, WaveguideGeometry};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn geometry() -> impl Strategy<Value = WaveguideGeometry> {
    (0.3e-3..3e-3f64, 5e-3..80e-3f64).prop_map(|(b, l)| WaveguideGeometry::with_default_leakage(b, l).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn angle_frequency_round_trip(geom in geometry(), phi in 1.0..89.0f64) {
        let f = frequency_of_angle(&geom, phi).unwrap();
        prop_assert!(f > geom.cutoff_frequency());
        let back = beam_angle(&geom, f).unwrap();
        prop_assert!((back - phi).abs() <= 1e-9 * phi.max(1.0), "{phi} -> {f} -> {back}");
    }

    #[test]
    fn gain_peaks_at_beam_angle(geom in geometry(), ratio in 1.05..4.0f64, offset in -30.0..30.0f64) {
        let f = ratio * geom.cutoff_frequency();
        let peak = beam_angle(&geom, f).unwrap();
        let phi = (peak + offset).clamp(0.1, 89.9);
        let at_peak = aperture_gain(&geom, f, peak).unwrap().norm_sqr();
        let elsewhere = aperture_gain(&geom, f, phi).unwrap().norm_sqr();
        prop_assert!(elsewhere <= at_peak * (1.0 + 1e-12));
        prop_assert!(at_peak <= 1.0 + 1e-12);
    }

    #[test]
    fn waterfill_meets_optimality_conditions(
        gains in prop::collection::vec(prop_oneof![Just(0.0), 1e-3..1e3f64], 1..64),
        budget in 1e-3..1e3f64,
    ) {
        prop_assume!(gains.iter().any(|&g| g > 0.0));
        let wf = waterfill(&gains, budget).unwrap();
        let total: f64 = wf.powers.iter().sum();
        prop_assert!((total - budget).abs() <= 1e-9 * budget);
        for (&g, &p) in gains.iter().zip(&wf.powers) {
            prop_assert!(p >= 0.0);
            if g == 0.0 {
                prop_assert_eq!(p, 0.0);
            } else if p > 0.0 {
                prop_assert!((p + g.recip() - wf.water_level).abs() <= 1e-9 * wf.water_level);
            } else {
                prop_assert!(g.recip() >= wf.water_level * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn eigh_reconstructs(n in 1usize..24, entries in prop::collection::vec(-1.0..1.0f64, 2 * 24 * 24)) {
        let mut a = DMatrix::from_fn(n, n, |i, j| Complex64::new(entries[2 * (i * 24 + j)], entries[2 * (i * 24 + j) + 1]));
        a = (&a + a.adjoint()) * Complex64::new(0.5, 0.0);
        let e = eigh(&a).unwrap();
        prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, e.values.iter().map(|&v| Complex64::new(v, 0.0))));
        let rebuilt = &e.vectors * d * e.vectors.adjoint();
        let scale = a.iter().map(|z| z.norm()).fold(1e-300, f64::max);
        prop_assert!((rebuilt - &a).iter().all(|z| z.norm() <= 1e-10 * scale));
    }

    #[test]
    fn csv_floats_keep_nine_digits(x in prop::num::f64::NORMAL) {
        let s = fmt_float(x);
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-9 * x.abs(), "{x} -> {s}");
    }
}
