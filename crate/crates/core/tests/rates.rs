use approx::assert_relative_eq;
use proptest::prelude::*;

use qcr_thermo::config::grid;
use qcr_thermo::qcr::{
    dynes_dos, effective_temperature, extract_dynes, junction_current, ladder_rates, transition_rates,
    tunnel_spectral_fn, CouplingSpec, JunctionSpec, RatePair,
};
use qcr_thermo::system::SystemSpec;
use qcr_thermo::units::{photon_energy, H_OVER_KB};

const GAMMA_D: f64 = 2.3e-3;

/// n_S(ε) evaluated with an explicit polar square root.
fn dos_polar(eps: f64, gamma: f64) -> f64 {
    // w = z² - 1 with z = eps + iγ
    let (wr, wi) = (eps * eps - gamma * gamma - 1.0, 2.0 * eps * gamma);
    let r = wr.hypot(wi).sqrt();
    let th = 0.5 * wi.atan2(wr);
    let (sr, si) = (r * th.cos(), r * th.sin());
    // z / sqrt(w)
    let den = sr * sr + si * si;
    ((eps * sr + gamma * si) / den).abs()
}

/// Composite Simpson rule with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn dos_at_gap_center_and_edge() {
    assert_relative_eq!(dynes_dos(0.0, GAMMA_D), GAMMA_D / (1.0 + GAMMA_D * GAMMA_D).sqrt(), max_relative = 1e-12);
    let edge = dynes_dos(1.0, GAMMA_D);
    assert_relative_eq!(edge, dos_polar(1.0, GAMMA_D), max_relative = 1e-12);
    // z/sqrt(z²-1) at z = 1 + iγ is about e^{-iπ/4}/sqrt(2γ)
    assert_relative_eq!(edge, 0.5 / GAMMA_D.sqrt(), max_relative = 1e-2);
    assert_relative_eq!(edge, 10.443_713_681_632_38, max_relative = 1e-12);
}

#[test]
fn dos_matches_polar_form_across_gap() {
    for k in -300..=300 {
        let eps = 0.01 * k as f64;
        assert_relative_eq!(dynes_dos(eps, GAMMA_D), dos_polar(eps, GAMMA_D), max_relative = 1e-10);
    }
}

#[test]
fn low_temperature_spectral_function_is_integrated_dos() {
    // At k_B T ≪ E and V = 0 each direction reduces to ∫_0^E n_S dε.
    let j = JunctionSpec {
        t_n: 0.005,
        ..JunctionSpec::default()
    };
    for e_over_delta in [0.5, 1.5, 3.0] {
        let e = e_over_delta * j.delta;
        let oracle = 2.0 * simpson(|x| dos_polar(x / j.delta, j.gamma_d), 0.0, e, 2_000_000);
        let f = tunnel_spectral_fn(e, 0.0, &j).unwrap();
        assert_relative_eq!(f, oracle, max_relative = 2e-3);
    }
}

#[test]
fn sub_gap_absorption_suppressed_to_dynes_level() {
    let j = JunctionSpec {
        t_n: 0.005,
        ..JunctionSpec::default()
    };
    let low = tunnel_spectral_fn(0.5 * j.delta, 0.0, &j).unwrap();
    let high = tunnel_spectral_fn(3.0 * j.delta, 0.0, &j).unwrap();
    let ratio = low / high;
    assert!(ratio < 2.0 * j.gamma_d && ratio > 0.01 * j.gamma_d, "ratio {ratio}");
}

#[test]
fn ohmic_growth_far_above_gap() {
    let j = JunctionSpec::default();
    let e = photon_energy(4.09);
    let f5 = tunnel_spectral_fn(e, 5.0 * j.delta, &j).unwrap();
    let f10 = tunnel_spectral_fn(e, 10.0 * j.delta, &j).unwrap();
    assert_relative_eq!(f10 / f5, 2.0, max_relative = 0.05);
}

#[test]
fn spectral_function_monotone_in_absorbed_energy() {
    let j = JunctionSpec::default();
    for v in [0.0, 0.1, 0.3, 1.2] {
        let mut prev = 0.0;
        for k in 1..=60 {
            let f = tunnel_spectral_fn(0.01 * k as f64, v, &j).unwrap();
            assert!(f >= prev * (1.0 - 1e-9), "V = {v}, E step {k}");
            prev = f;
        }
    }
}

#[test]
fn zero_bias_rates_obey_detailed_balance() {
    let system = SystemSpec::default();
    for t_n in [0.03, 0.1, 0.3] {
        let j = JunctionSpec {
            t_n,
            ..JunctionSpec::default()
        };
        let table = transition_rates(&system, &j, &CouplingSpec::default(), 0.0).unwrap();
        for p in &table.pairs {
            let kms = (-H_OVER_KB * p.omega / t_n).exp();
            assert_relative_eq!(p.gamma_up / p.gamma_down, kms, max_relative = 1e-6);
        }
    }
    let table = transition_rates(&system, &JunctionSpec::default(), &CouplingSpec::default(), 0.0).unwrap();
    assert_relative_eq!(effective_temperature(&table.pairs[0]).unwrap(), 0.1, max_relative = 1e-4);
}

#[test]
fn bias_sign_is_irrelevant_bitwise() {
    let system = SystemSpec::default();
    let j = JunctionSpec::default();
    let c = CouplingSpec::default();
    for v in [0.05, 0.215, 0.6, 1.2] {
        let plus = transition_rates(&system, &j, &c, v).unwrap();
        let minus = transition_rates(&system, &j, &c, -v).unwrap();
        for (a, b) in plus.pairs.iter().zip(&minus.pairs) {
            assert_eq!(a.gamma_down.to_bits(), b.gamma_down.to_bits());
            assert_eq!(a.gamma_up.to_bits(), b.gamma_up.to_bits());
        }
    }
}

#[test]
fn sub_gap_decay_activates_with_bias() {
    let system = SystemSpec::default();
    let mut prev = 0.0;
    for v in [0.0, 0.05, 0.1, 0.15, 0.2] {
        let g = transition_rates(&system, &JunctionSpec::default(), &CouplingSpec::default(), v)
            .unwrap()
            .pairs[0]
            .gamma_down;
        assert!(g > prev, "γ↓ not increasing at {v} mV");
        prev = g;
    }
}

#[test]
fn effective_temperature_rises_above_gap() {
    let system = SystemSpec::default();
    let j = JunctionSpec::default();
    let mut prev = 0.0;
    for v in grid(0.215, 1.5, 0.025) {
        let t = effective_temperature(&transition_rates(&system, &j, &CouplingSpec::default(), v).unwrap().pairs[0]).unwrap();
        assert!(t >= prev, "T_eff fell at {v} mV");
        prev = t;
    }
}

#[test]
fn ladder_rates_scale_with_matrix_element() {
    let system = SystemSpec::default();
    let j = JunctionSpec::default();
    for v in [0.0, 0.3, 1.2] {
        let table = transition_rates(&system, &j, &CouplingSpec::default(), v).unwrap();
        let f0 = tunnel_spectral_fn(photon_energy(table.pairs[0].omega), v, &j).unwrap();
        for (m, p) in table.pairs.iter().enumerate() {
            let fm = tunnel_spectral_fn(photon_energy(p.omega), v, &j).unwrap();
            let expected = (m + 1) as f64 * fm / f0;
            assert_relative_eq!(p.gamma_down / table.pairs[0].gamma_down, expected, max_relative = 1e-9);
        }
    }
}

#[test]
fn purcell_filter_scales_by_detuning() {
    let system = SystemSpec::default();
    let j = JunctionSpec::default();
    let off = transition_rates(&system, &j, &CouplingSpec::default(), 0.6).unwrap();
    let on = transition_rates(
        &system,
        &j,
        &CouplingSpec {
            purcell_filter: true,
            ..CouplingSpec::default()
        },
        0.6,
    )
    .unwrap();
    let r = system.reset_resonator;
    for (a, b) in off.pairs.iter().zip(&on.pairs) {
        let factor = (r.g / (a.omega - r.omega)).powi(2);
        assert_relative_eq!(b.gamma_down, factor * a.gamma_down, max_relative = 1e-12);
        assert_relative_eq!(b.gamma_up, factor * a.gamma_up, max_relative = 1e-12);
    }
}

#[test]
fn inverted_pair_is_an_error_not_a_temperature() {
    let pair = RatePair {
        gamma_down: 1.0,
        gamma_up: 1.0,
        omega: 4.09,
    };
    assert!(effective_temperature(&pair).is_err());
}

#[test]
fn iv_round_trip_recovers_gap_and_dynes() {
    let j = JunctionSpec::default();
    let iv: Vec<(f64, f64)> = (-600..=600)
        .map(|k| {
            let v = 1e-3 * k as f64;
            (v, junction_current(v, &j).unwrap())
        })
        .collect();
    let (delta, gamma_d) = extract_dynes(&iv).unwrap();
    assert!((delta - 0.215).abs() < 0.005, "Δ = {delta}");
    assert!(gamma_d > j.gamma_d / 1.5 && gamma_d < j.gamma_d * 1.5, "γ_D = {gamma_d}");
}

#[test]
fn ohmic_iv_has_no_gap() {
    let iv: Vec<(f64, f64)> = (-100..=100).map(|k| (0.01 * k as f64, 0.01 * k as f64 / 13.8)).collect();
    assert!(extract_dynes(&iv).is_err());
}

#[test]
fn iv_that_stops_at_the_gap_is_rejected() {
    let j = JunctionSpec::default();
    let iv: Vec<(f64, f64)> = (-300..=300)
        .map(|k| {
            let v = 1e-3 * k as f64;
            (v, junction_current(v, &j).unwrap())
        })
        .collect();
    assert!(extract_dynes(&iv).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn detailed_balance_for_any_ladder(omega in 1.0f64..8.0, t_n in 0.03f64..0.4) {
        let j = JunctionSpec { t_n, ..JunctionSpec::default() };
        let table = ladder_rates(&[omega], None, &j, &CouplingSpec::default(), 0.0).unwrap();
        let p = table.pairs[0];
        let kms = (-H_OVER_KB * omega / t_n).exp();
        prop_assert!((p.gamma_up / p.gamma_down / kms - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rates_linear_in_kappa(kappa in 1e-5f64..1.0, v in -1.5f64..1.5) {
        let system = SystemSpec::default();
        let j = JunctionSpec::default();
        let unit = transition_rates(&system, &j, &CouplingSpec { kappa_eff: 1.0, purcell_filter: false }, v).unwrap();
        let scaled = transition_rates(&system, &j, &CouplingSpec { kappa_eff: kappa, purcell_filter: false }, v).unwrap();
        for (a, b) in unit.pairs.iter().zip(&scaled.pairs) {
            prop_assert!((b.gamma_down - kappa * a.gamma_down).abs() <= 1e-12 * b.gamma_down.abs());
            prop_assert!((b.gamma_up - kappa * a.gamma_up).abs() <= 1e-12 * b.gamma_up.abs());
            prop_assert!(b.gamma_down >= 0.0 && b.gamma_up >= 0.0);
        }
    }

    #[test]
    fn dos_is_even_and_non_negative(eps in -50.0f64..50.0, gamma in 1e-4f64..0.5) {
        let a = dynes_dos(eps, gamma);
        prop_assert!(a >= 0.0);
        prop_assert_eq!(a, dynes_dos(-eps, gamma));
    }
}
