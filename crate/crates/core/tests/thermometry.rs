use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qcr_thermo::error::Error;
use qcr_thermo::system::TransmonSpec;
use qcr_thermo::thermometry::{
    fit_gibbs, fit_saturation, gibbs_four_state, gibbs_populations, heating_slope, GIBBS_TRUNCATION,
};
use qcr_thermo::units::H_OVER_KB;

/// Boltzmann weights of E_n = n f + α n(n-1)/2, first four kept.
fn boltzmann_four(t: f64) -> [f64; 4] {
    let w: Vec<f64> = (0..6)
        .map(|n| {
            let n = n as f64;
            (-H_OVER_KB * (4.09 * n - 0.1365 * n * (n - 1.0)) / t).exp()
        })
        .collect();
    let z: f64 = w[..4].iter().sum();
    [w[0] / z, w[1] / z, w[2] / z, w[3] / z]
}

#[test]
fn idle_and_hot_ground_populations() {
    let spec = TransmonSpec::default();
    assert!((gibbs_four_state(0.110, &spec)[0] - 0.83).abs() < 0.01);
    assert!((gibbs_four_state(0.476, &spec)[0] - 0.42).abs() < 0.02);
    for t in [0.05, 0.11, 0.3, 0.476, 1.0] {
        let p = gibbs_four_state(t, &spec);
        for (a, b) in p.iter().zip(boltzmann_four(t)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn near_zero_temperature_is_ground_state() {
    let p = gibbs_populations(1e-4, &TransmonSpec::default(), GIBBS_TRUNCATION);
    assert_eq!(p.len(), 6);
    assert!((p[0] - 1.0).abs() < 1e-12);
}

#[test]
fn exact_input_at_200_mk() {
    let fit = fit_gibbs(&gibbs_four_state(0.2, &TransmonSpec::default()), &TransmonSpec::default()).unwrap();
    assert!((fit.temperature - 0.2).abs() < 1e-4);
    assert!(fit.residual < 1e-15);
    assert_eq!(fit.truncation, 6);
}

#[test]
fn robust_to_percent_level_noise() {
    let spec = TransmonSpec::default();
    let clean = gibbs_four_state(0.3, &spec);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..50 {
        let noisy: Vec<f64> = clean.iter().map(|p| (p + rng.random_range(-0.01..0.01)).max(0.0)).collect();
        let z: f64 = noisy.iter().sum();
        let noisy: Vec<f64> = noisy.iter().map(|p| p / z).collect();
        let fit = fit_gibbs(&noisy, &spec).unwrap();
        assert!((fit.temperature - 0.3).abs() < 0.02, "{}", fit.temperature);
    }
}

#[test]
fn heated_ground_population_reads_about_470_mk() {
    let spec = TransmonSpec::default();
    let p = gibbs_four_state(0.474, &spec);
    let fit = fit_gibbs(&[0.42, p[1], p[2], 1.0 - 0.42 - p[1] - p[2]], &spec).unwrap();
    assert!(fit.temperature > 0.44 && fit.temperature < 0.50, "{}", fit.temperature);
}

#[test]
fn inverted_populations_are_flagged() {
    let err = fit_gibbs(&[0.1, 0.2, 0.3, 0.4], &TransmonSpec::default()).unwrap_err();
    assert!(matches!(err, Error::NonThermalPopulations(_)));
}

#[test]
fn uncertainty_grows_with_temperature() {
    let spec = TransmonSpec::default();
    let perturb = |p: Vec<f64>| -> Vec<f64> {
        let q = [p[0] - 0.005, p[1] + 0.003, p[2] + 0.001, p[3] + 0.001];
        q.to_vec()
    };
    let cold = fit_gibbs(&perturb(gibbs_four_state(0.15, &spec)), &spec).unwrap();
    let hot = fit_gibbs(&perturb(gibbs_four_state(0.47, &spec)), &spec).unwrap();
    assert!(hot.uncertainty / hot.temperature > cold.uncertainty / cold.temperature);
}

#[test]
fn saturation_curves_round_trip() {
    let times: Vec<f64> = (0..10).map(|k| 20.0 * k as f64).collect();
    for (a, tau) in [(0.36, 109.0), (0.1, 185.0), (0.25, 80.0)] {
        let temps: Vec<f64> = times.iter().map(|t| 0.110 + a * (1.0 - (-t / tau).exp())).collect();
        let fit = fit_saturation(&times, &temps).unwrap();
        assert!((fit.t0 / 0.110 - 1.0).abs() < 0.01);
        assert!((fit.a / a - 1.0).abs() < 0.01);
        assert!((fit.tau / tau - 1.0).abs() < 0.01);
        assert!(!fit.degenerate);
    }
}

#[test]
fn flat_curve_is_degenerate() {
    let times = [0.0, 50.0, 100.0, 150.0, 200.0];
    let fit = fit_saturation(&times, &[0.11; 5]).unwrap();
    assert!(fit.degenerate);
    assert!((fit.t0 - 0.11).abs() < 1e-9);
    assert!(fit.a.abs() < 1e-6);
}

#[test]
fn too_few_or_unordered_points_rejected() {
    assert!(fit_saturation(&[0.0, 1.0, 2.0], &[0.1, 0.2, 0.3]).is_err());
    assert!(fit_saturation(&[0.0, 2.0, 1.0, 3.0], &[0.1, 0.2, 0.3, 0.4]).is_err());
}

#[test]
fn slope_of_a_line_above_the_gap() {
    let pts: Vec<(f64, f64)> = (0..=12).map(|k| 0.1 * k as f64).map(|v| (v, 0.1 + 0.36 * v)).collect();
    assert!((heating_slope(&pts, 0.215).unwrap() - 0.36).abs() < 1e-12);
    // points at and below v_min are ignored
    let mut kinked = pts.clone();
    kinked[0].1 = 5.0;
    kinked[2].1 = -1.0;
    assert!((heating_slope(&kinked, 0.215).unwrap() - 0.36).abs() < 1e-12);
    assert!(heating_slope(&pts[..4], 0.215).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fit_inverts_gibbs(t in 0.05f64..1.0) {
        let spec = TransmonSpec::default();
        let fit = fit_gibbs(&gibbs_four_state(t, &spec), &spec).unwrap();
        prop_assert!((fit.temperature - t).abs() < 1e-3);
        prop_assert!(fit.uncertainty >= 0.0);
    }

    #[test]
    fn gibbs_strictly_decreasing(t in 0.01f64..5.0) {
        let p = gibbs_populations(t, &TransmonSpec::default(), GIBBS_TRUNCATION);
        prop_assert!(p.windows(2).all(|w| w[1] < w[0]));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fitted_temperature_monotone_in_ground_population(t1 in 0.05f64..1.0, t2 in 0.05f64..1.0) {
        prop_assume!((t1 - t2).abs() > 1e-3);
        let spec = TransmonSpec::default();
        let (a, b) = (gibbs_four_state(t1, &spec), gibbs_four_state(t2, &spec));
        let (fa, fb) = (fit_gibbs(&a, &spec).unwrap(), fit_gibbs(&b, &spec).unwrap());
        prop_assert_eq!(a[0] < b[0], fa.temperature > fb.temperature);
    }

    #[test]
    fn saturation_fit_recovers_parameters(t0 in 0.05f64..0.2, a in 0.05f64..0.5, tau in 30.0f64..300.0) {
        let times: Vec<f64> = (0..12).map(|k| 25.0 * k as f64).collect();
        let temps: Vec<f64> = times.iter().map(|t| t0 + a * (1.0 - (-t / tau).exp())).collect();
        let fit = fit_saturation(&times, &temps).unwrap();
        prop_assert!((fit.tau / tau - 1.0).abs() < 0.01);
        prop_assert!((fit.a / a - 1.0).abs() < 0.01);
        prop_assert!((fit.t0 / t0 - 1.0).abs() < 0.01);
    }
}
