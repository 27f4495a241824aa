use approx::assert_relative_eq;
use nalgebra::SymmetricEigen;
use proptest::prelude::*;

use qcr_thermo::error::Error;
use qcr_thermo::system::{
    build_hamiltonian, build_hamiltonian_capped, diagonalize, dispersive_shift, dispersive_shift_perturbative,
    excitation_number, ladder_elements, transmon_energies, SystemSpec, TransmonSpec,
};

/// Second-order energy of bare state `(n, k, l)` from the two exchange
/// couplings, computed from the bare ladder alone.
fn perturbative_energy(spec: &SystemSpec, (n, k, l): (usize, usize, usize)) -> f64 {
    let e0 = spec.bare_energy(n, k, l);
    let mut shift = 0.0;
    let mut add = |v: f64, other: (usize, usize, usize)| {
        shift += v * v / (e0 - spec.bare_energy(other.0, other.1, other.2));
    };
    let (g1, g2) = (spec.reset_resonator.g, spec.readout_resonator.g);
    let (nf, kf, lf) = (n as f64, k as f64, l as f64);
    if k > 0 {
        add(g1 * (nf + 1.0).sqrt() * kf.sqrt(), (n + 1, k - 1, l));
    }
    if n > 0 {
        add(g1 * nf.sqrt() * (kf + 1.0).sqrt(), (n - 1, k + 1, l));
    }
    if l > 0 {
        add(g2 * (nf + 1.0).sqrt() * lf.sqrt(), (n + 1, k, l - 1));
    }
    if n > 0 {
        add(g2 * nf.sqrt() * (lf + 1.0).sqrt(), (n - 1, k, l + 1));
    }
    e0 + shift
}

fn scaled(factor: f64) -> SystemSpec {
    let mut spec = SystemSpec::default();
    spec.reset_resonator.g *= factor;
    spec.readout_resonator.g *= factor;
    spec
}

fn max_discrepancy(spec: &SystemSpec, labels: &[(usize, usize, usize)]) -> f64 {
    let s = diagonalize(spec).unwrap();
    let ground = perturbative_energy(spec, (0, 0, 0));
    labels
        .iter()
        .map(|&lab| (s.energy_of(lab).unwrap() - (perturbative_energy(spec, lab) - ground)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn transmon_ladder_values() {
    let e = transmon_energies(&TransmonSpec::default());
    assert_eq!(e[0], 0.0);
    assert_relative_eq!(e[2], 2.0 * 4.09 - 0.273, max_relative = 1e-12);
    let summed: f64 = (0..5).map(|m| 4.09 + m as f64 * -0.273).sum();
    assert_relative_eq!(e[5], summed, max_relative = 1e-12);
    assert_relative_eq!(e[5], 17.72, max_relative = 1e-12);
    assert!(e.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn ladder_element_list() {
    let el = ladder_elements(&TransmonSpec::default());
    let expected = [1.0, 2f64.sqrt(), 3f64.sqrt(), 2.0, 5f64.sqrt()];
    assert_eq!(el.len(), 5);
    for (a, b) in el.iter().zip(expected) {
        assert_relative_eq!(*a, b, max_relative = 1e-15);
    }
}

#[test]
fn hamiltonian_is_hermitian_and_conserves_excitations() {
    let spec = SystemSpec::default();
    let h = build_hamiltonian(&spec).unwrap();
    assert_eq!(h.nrows(), 6 * 4 * 4);
    let scale = h.amax();
    assert!((&h - h.transpose()).amax() < 1e-12 * scale);
    let n = excitation_number(&spec);
    let comm = &h * &n - &n * &h;
    assert!(comm.norm() < 1e-12, "commutator norm {}", comm.norm());
}

#[test]
fn uncoupled_spectrum_is_sum_of_ladders() {
    let spec = scaled(0.0);
    let h = build_hamiltonian(&spec).unwrap();
    let eig = SymmetricEigen::new(h.clone());
    let mut got: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    got.sort_by(f64::total_cmp);
    let mut bare: Vec<f64> = (0..spec.dimension())
        .map(|i| {
            let (n, k, l) = spec.product_state(i);
            spec.bare_energy(n, k, l)
        })
        .collect();
    bare.sort_by(f64::total_cmp);
    for (a, b) in got.iter().zip(&bare) {
        assert_relative_eq!(*a, *b, epsilon = 1e-12);
    }
    let s = diagonalize(&spec).unwrap();
    for c in 0..spec.dimension() {
        let (n, k, l) = s.labels[c];
        let overlap = s.vectors[(spec.index(n, k, l), c)].powi(2);
        assert!(overlap > 1.0 - 1e-12);
    }
}

#[test]
fn transmon_only_subspace() {
    let mut spec = SystemSpec::default();
    spec.reset_resonator.n_levels = 1;
    spec.readout_resonator.n_levels = 1;
    let s = diagonalize(&spec).unwrap();
    for (a, b) in s.energies.iter().zip([0.0, 4.09, 7.907, 11.451]) {
        assert_relative_eq!(*a, b, epsilon = 1e-12);
    }
}

#[test]
fn dispersive_pull_matches_perturbation_theory() {
    let s = diagonalize(&SystemSpec::default()).unwrap();
    let exact = dispersive_shift(&s).unwrap();
    let pert = dispersive_shift_perturbative(&SystemSpec::default());
    assert!((exact - pert).abs() < 0.1 * pert.abs(), "exact {exact}, perturbative {pert}");
}

#[test]
fn dressed_energies_converge_at_fourth_order() {
    let labels = [(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 0, 1), (2, 0, 0)];
    let full = max_discrepancy(&scaled(1.0), &labels);
    let half = max_discrepancy(&scaled(0.5), &labels);
    let ratio = full / half;
    assert!(ratio >= 8.0 * 0.7, "halving g improved the discrepancy only {ratio}x");
}

#[test]
fn dimension_cap_reports_overflow() {
    let err = build_hamiltonian_capped(&SystemSpec::default(), 10).unwrap_err();
    assert!(matches!(err, Error::DimensionOverflow { dim: 96, cap: 10 }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn excitation_number_commutes_for_any_couplings(g1 in 0.0f64..0.3, g2 in 0.0f64..0.3, w1 in 3.0f64..9.0, w2 in 3.0f64..9.0) {
        let mut spec = SystemSpec::default();
        spec.reset_resonator.g = g1;
        spec.reset_resonator.omega = w1;
        spec.readout_resonator.g = g2;
        spec.readout_resonator.omega = w2;
        let h = build_hamiltonian(&spec).unwrap();
        let n = excitation_number(&spec);
        prop_assert!((&h * &n - &n * &h).norm() < 1e-12);
        prop_assert!((&h - h.transpose()).amax() <= 1e-12 * h.amax());
    }

    #[test]
    fn transmon_ladder_increasing(omega in 3.0f64..8.0, alpha in -0.5f64..-0.05) {
        let spec = TransmonSpec { omega_ge: omega, alpha, n_levels: 6 };
        let e = transmon_energies(&spec);
        prop_assert!(e.windows(2).all(|w| w[1] > w[0]));
    }
}
