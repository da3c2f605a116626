use proptest::prelude::*;

use smallnoise::chisq::{chisq_threshold, chisq_weights, select_m, stat_chisq, FourierCoeffs};
use smallnoise::gof_core::NullPath;
use smallnoise::power::{rejection_rate, AlternativeSpec};
use smallnoise::simulate::{simulate_sde, Scaling, TimeGrid};
use smallnoise::{CoefficientFn, ModelSpec, Trajectory};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_is_exact(values in prop::collection::vec(-1e6f64..1e6, 3..60), horizon in 0.1f64..10.0) {
        let grid = TimeGrid::new(horizon, values.len() - 1).unwrap();
        let tr = Trajectory::new(grid, values).unwrap();
        let back = Trajectory::read_csv(tr.to_csv_string().as_bytes()).unwrap();
        prop_assert_eq!(back.values, tr.values);
    }

    #[test]
    fn chisq_weights_are_normalised(m in 1usize..300, k in 1u32..8) {
        let w = chisq_weights(m, k);
        prop_assert_eq!(w.len(), 2 * m - 1);
        let s: f64 = w.iter().map(|x| x * x).sum();
        prop_assert!((2.0 * s - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|&x| x > 0.0));
        prop_assert!(w.windows(2).take(m - 1).all(|p| p[0] <= p[1]));
    }

    #[test]
    fn chisq_threshold_decreases_in_alpha(m in 1usize..400, a in 0.001f64..0.49) {
        prop_assert!(chisq_threshold(m, a).unwrap() >= chisq_threshold(m, a + 0.5).unwrap());
    }

    #[test]
    fn unit_coefficients_centre_the_statistic(m in 1usize..50) {
        let c = FourierCoeffs::new(vec![1.0; 2 * m - 1]).unwrap();
        prop_assert!(stat_chisq(&c).abs() < 1e-12);
    }

    #[test]
    fn smaller_noise_needs_more_coefficients(r in 0.01f64..1.0, e in 0.005f64..0.2) {
        prop_assert!(select_m(r, e / 2.0) >= select_m(r, e));
    }

    #[test]
    fn rejection_rate_is_monotone(values in prop::collection::vec(-5f64..5.0, 1..200), a in -5f64..5.0, d in 0f64..3.0) {
        let lo = rejection_rate(&values, a);
        let hi = rejection_rate(&values, a + d);
        prop_assert!(hi.power <= lo.power);
    }

    #[test]
    fn simple_statistics_are_nonnegative(seed in 0u64..1000, eps in 0.01f64..0.5, shift in -1f64..1.0) {
        let spec = ModelSpec::from_strs("2+sin(x)", "0.5+0.1*x^2", 0.0, 1.0, eps).unwrap();
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let mut tr = simulate_sde(&spec, &grid, seed).unwrap();
        for v in tr.values.iter_mut().skip(1) {
            *v += shift;
        }
        let np = NullPath::new(&spec, &grid).unwrap();
        for v in [np.cvm(&tr).unwrap(), np.ks(&tr).unwrap(), np.cvm_plugin(&tr).unwrap(), np.ks_plugin(&tr).unwrap()] {
            prop_assert!(v >= 0.0 && v.is_finite());
        }
        prop_assert!(np.cvm_integral(&tr).unwrap().0 >= 0.0);
    }

    #[test]
    fn polynomial_coefficients_evaluate(a in -10f64..10.0, b in -10f64..10.0, c in -10f64..10.0, x in -3f64..3.0) {
        let f = CoefficientFn::parse(&format!("{a:?} + {b:?}*x + {c:?}*x^2")).unwrap();
        let want = a + b * x + c * x * x;
        prop_assert!((f.value(x).unwrap() - want).abs() <= 1e-12 * (1.0 + want.abs() + (b * x).abs() + (c * x * x).abs()));
        let d = f.d_dx(x, None).unwrap();
        prop_assert!((d - (b + 2.0 * c * x)).abs() <= 1e-12 * (1.0 + b.abs() + (c * x).abs()));
    }

    #[test]
    fn alternative_json_round_trip(h in -5f64..5.0, k in 0.1f64..4.0) {
        let alt = AlternativeSpec::new(CoefficientFn::constant(h), Scaling::Eq7).scaled(k);
        let back = AlternativeSpec::from_json(&alt.to_json()).unwrap();
        prop_assert_eq!(back.scaling, alt.scaling);
        prop_assert!((back.h.value(0.3).unwrap() - alt.h.value(0.3).unwrap()).abs() < 1e-12);
    }
}
