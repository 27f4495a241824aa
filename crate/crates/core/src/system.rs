//! Truncated transmon + two-resonator Hamiltonian.
//!
//! The core circuit is a Kerr oscillator (the transmon) coupled in
//! excitation-conserving form to a reset resonator and a readout resonator:
//!
//! ```text
//! H/h = f_ge b†b + (α/2) b†b†bb + f_1 a1†a1 + f_2 a2†a2
//!       + g_1 (b† a1 + b a1†) + g_2 (b† a2 + b a2†)
//! ```
//!
//! All entries are ordinary frequencies in GHz. Product-basis states are
//! indexed as `n * (d1 * d2) + k * d2 + l` for transmon level `n`, reset
//! photon number `k` and readout photon number `l`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default cap on the tensor-product dimension.
pub const DEFAULT_DIMENSION_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmonSpec {
    /// Qubit frequency in GHz.
    pub omega_ge: f64,
    /// Anharmonicity in GHz (negative).
    pub alpha: f64,
    pub n_levels: usize,
}

impl Default for TransmonSpec {
    fn default() -> Self {
        Self {
            omega_ge: 4.09,
            alpha: -0.273,
            n_levels: 6,
        }
    }
}

impl TransmonSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_ge > 0.0) {
            return Err(invalid("transmon.omega_ge", "must be > 0"));
        }
        if !(self.alpha < 0.0) {
            return Err(invalid("transmon.alpha", "must be < 0"));
        }
        if self.n_levels < 4 {
            return Err(invalid("transmon.n_levels", "must be >= 4"));
        }
        Ok(())
    }

    /// Frequency of the `m -> m+1` transition.
    pub fn transition_frequency(&self, m: usize) -> f64 {
        self.omega_ge + m as f64 * self.alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorSpec {
    /// Resonator frequency in GHz.
    pub omega: f64,
    /// Coupling to the transmon in GHz.
    pub g: f64,
    pub n_levels: usize,
}

impl ResonatorSpec {
    pub fn reset_default() -> Self {
        Self {
            omega: 4.67,
            g: 0.0596,
            n_levels: 4,
        }
    }

    pub fn readout_default() -> Self {
        Self {
            omega: 7.44,
            g: 0.0704,
            n_levels: 4,
        }
    }

    pub fn validate(&self, field: &'static str) -> Result<()> {
        if !(self.omega > 0.0) {
            return Err(invalid(field, "omega must be > 0"));
        }
        if !(self.g >= 0.0) {
            return Err(invalid(field, "g must be >= 0"));
        }
        if self.n_levels == 0 {
            return Err(invalid(field, "n_levels must be >= 1"));
        }
        Ok(())
    }

    /// |g| / |omega - omega_ge|, small in the dispersive regime.
    pub fn dispersive_ratio(&self, transmon: &TransmonSpec) -> f64 {
        self.g.abs() / (self.omega - transmon.omega_ge).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub transmon: TransmonSpec,
    pub reset_resonator: ResonatorSpec,
    pub readout_resonator: ResonatorSpec,
}

impl Default for SystemSpec {
    fn default() -> Self {
        Self {
            transmon: TransmonSpec::default(),
            reset_resonator: ResonatorSpec::reset_default(),
            readout_resonator: ResonatorSpec::readout_default(),
        }
    }
}

impl SystemSpec {
    pub fn validate(&self) -> Result<()> {
        self.transmon.validate()?;
        self.reset_resonator.validate("reset_resonator")?;
        self.readout_resonator.validate("readout_resonator")?;
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (
            self.transmon.n_levels,
            self.reset_resonator.n_levels,
            self.readout_resonator.n_levels,
        )
    }

    pub fn dimension(&self) -> usize {
        let (a, b, c) = self.dims();
        a.saturating_mul(b).saturating_mul(c)
    }

    pub fn index(&self, n: usize, k: usize, l: usize) -> usize {
        let (_, d1, d2) = self.dims();
        n * d1 * d2 + k * d2 + l
    }

    pub fn product_state(&self, index: usize) -> (usize, usize, usize) {
        let (_, d1, d2) = self.dims();
        (index / (d1 * d2), (index / d2) % d1, index % d2)
    }

    /// Diagonal energy of a bare product state.
    pub fn bare_energy(&self, n: usize, k: usize, l: usize) -> f64 {
        transmon_level(&self.transmon, n)
            + k as f64 * self.reset_resonator.omega
            + l as f64 * self.readout_resonator.omega
    }
}

fn transmon_level(spec: &TransmonSpec, n: usize) -> f64 {
    let n = n as f64;
    n * spec.omega_ge + 0.5 * spec.alpha * n * (n - 1.0)
}

/// Bare transmon ladder `E_n = n f_ge + (α/2) n(n-1)` for `n < n_levels`.
pub fn transmon_energies(spec: &TransmonSpec) -> Vec<f64> {
    (0..spec.n_levels).map(|n| transmon_level(spec, n)).collect()
}

/// `|<n| b + b† |n+1>| = sqrt(n+1)` for each adjacent pair of levels.
pub fn ladder_elements(spec: &TransmonSpec) -> Vec<f64> {
    (1..spec.n_levels).map(|n| (n as f64).sqrt()).collect()
}

pub fn build_hamiltonian(spec: &SystemSpec) -> Result<DMatrix<f64>> {
    build_hamiltonian_capped(spec, DEFAULT_DIMENSION_CAP)
}

/// Full Hamiltonian in the product basis. The matrix is real symmetric.
pub fn build_hamiltonian_capped(spec: &SystemSpec, cap: usize) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let dim = spec.dimension();
    if dim > cap {
        return Err(Error::DimensionOverflow { dim, cap });
    }
    let (nt, d1, d2) = spec.dims();
    let g1 = spec.reset_resonator.g;
    let g2 = spec.readout_resonator.g;
    let mut h = DMatrix::zeros(dim, dim);
    for n in 0..nt {
        for k in 0..d1 {
            for l in 0..d2 {
                let i = spec.index(n, k, l);
                h[(i, i)] = spec.bare_energy(n, k, l);
                if n + 1 < nt {
                    let up = ((n + 1) as f64).sqrt();
                    // b† a1: |n, k, l> -> |n+1, k-1, l>
                    if k > 0 {
                        let j = spec.index(n + 1, k - 1, l);
                        let v = g1 * up * (k as f64).sqrt();
                        h[(j, i)] += v;
                        h[(i, j)] += v;
                    }
                    if l > 0 {
                        let j = spec.index(n + 1, k, l - 1);
                        let v = g2 * up * (l as f64).sqrt();
                        h[(j, i)] += v;
                        h[(i, j)] += v;
                    }
                }
            }
        }
    }
    Ok(h)
}

/// Total excitation number `b†b + a1†a1 + a2†a2` (diagonal in the product basis).
pub fn excitation_number(spec: &SystemSpec) -> DMatrix<f64> {
    let dim = spec.dimension();
    DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            let (n, k, l) = spec.product_state(i);
            (n + k + l) as f64
        } else {
            0.0
        }
    })
}

/// Diagonalized Hamiltonian with dressed-state bookkeeping.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Eigenfrequencies in GHz, ascending, ground shifted to 0.
    pub energies: Vec<f64>,
    /// Columns are eigenvectors in the product basis, ordered like `energies`.
    pub vectors: DMatrix<f64>,
    /// Bare product state `(n, k, l)` assigned to each dressed state.
    pub labels: Vec<(usize, usize, usize)>,
}

impl Spectrum {
    /// Bare transmon index of each dressed state.
    pub fn transmon_labels(&self) -> Vec<usize> {
        self.labels.iter().map(|&(n, _, _)| n).collect()
    }

    /// Dressed index carrying bare label `(n, k, l)`.
    pub fn dressed_index(&self, label: (usize, usize, usize)) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    /// Dressed energy of bare label `(n, k, l)`.
    pub fn energy_of(&self, label: (usize, usize, usize)) -> Option<f64> {
        self.dressed_index(label).map(|i| self.energies[i])
    }
}

pub fn diagonalize(spec: &SystemSpec) -> Result<Spectrum> {
    let h = build_hamiltonian(spec)?;
    let dim = h.nrows();
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let ground = eig.eigenvalues[order[0]];
    let energies: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i] - ground).collect();
    let vectors = DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);

    // Greedy maximum-overlap assignment: strongest overlaps claim first, ties
    // resolved towards the lowest bare index.
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(dim * dim);
    for c in 0..dim {
        for r in 0..dim {
            let w = vectors[(r, c)] * vectors[(r, c)];
            if w > 1e-6 {
                pairs.push((w, r, c));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut bare_taken = vec![false; dim];
    let mut label_of = vec![usize::MAX; dim];
    for (_, r, c) in pairs {
        if label_of[c] == usize::MAX && !bare_taken[r] {
            label_of[c] = r;
            bare_taken[r] = true;
        }
    }
    // anything left (overlaps below 1e-6 everywhere) takes the free bare states in order
    let mut free = (0..dim).filter(|&r| !bare_taken[r]);
    for l in label_of.iter_mut().filter(|l| **l == usize::MAX) {
        *l = free.next().expect("bijection");
    }
    let labels = label_of.into_iter().map(|r| spec.product_state(r)).collect();
    Ok(Spectrum {
        energies,
        vectors,
        labels,
    })
}

/// Readout-resonator pull: half the difference of the resonator frequency with
/// the transmon in `e` versus `g`, from exact dressed energies.
pub fn dispersive_shift(spectrum: &Spectrum) -> Option<f64> {
    let f_g = spectrum.energy_of((0, 0, 1))? - spectrum.energy_of((0, 0, 0))?;
    let f_e = spectrum.energy_of((1, 0, 1))? - spectrum.energy_of((1, 0, 0))?;
    Some(0.5 * (f_e - f_g))
}

/// Second-order perturbative value of the dispersive pull, `g² α / (δ (δ + α))`.
pub fn dispersive_shift_perturbative(spec: &SystemSpec) -> f64 {
    let g = spec.readout_resonator.g;
    let alpha = spec.transmon.alpha;
    let delta = spec.transmon.omega_ge - spec.readout_resonator.omega;
    g * g * alpha / (delta * (delta + alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_matches_summed_transitions() {
        let t = TransmonSpec::default();
        let e = transmon_energies(&t);
        assert_eq!(e[0], 0.0);
        assert!((e[2] - 7.907).abs() < 1e-12);
        let mut acc = 0.0;
        for m in 0..5 {
            acc += t.transition_frequency(m);
        }
        assert!((e[5] - acc).abs() < 1e-12);
        assert!((e[5] - 17.72).abs() < 1e-12);
        assert!(e.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn ladder_elements_are_root_n() {
        let l = ladder_elements(&TransmonSpec::default());
        assert_eq!(l.len(), 5);
        assert_eq!(l[0], 1.0);
        assert_eq!(l[3], 2.0);
        for (n, v) in l.iter().enumerate() {
            assert!((v - ((n + 1) as f64).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let mut t = TransmonSpec::default();
        t.alpha = 0.1;
        assert!(t.validate().is_err());
        t = TransmonSpec {
            n_levels: 3,
            ..Default::default()
        };
        assert!(t.validate().is_err());
        let mut s = SystemSpec::default();
        s.readout_resonator.g = -1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn dimension_cap_is_enforced() {
        let s = SystemSpec::default();
        assert_eq!(s.dimension(), 96);
        assert!(matches!(
            build_hamiltonian_capped(&s, 50),
            Err(Error::DimensionOverflow { dim: 96, cap: 50 })
        ));
    }

    #[test]
    fn transmon_only_subspace_is_bare_ladder() {
        let mut s = SystemSpec::default();
        s.reset_resonator.n_levels = 1;
        s.readout_resonator.n_levels = 1;
        let sp = diagonalize(&s).unwrap();
        let bare = transmon_energies(&s.transmon);
        for (a, b) in sp.energies.iter().zip(&bare) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((sp.energies[3] - 11.451).abs() < 1e-12);
    }

    #[test]
    fn index_round_trip() {
        let s = SystemSpec::default();
        for i in 0..s.dimension() {
            let (n, k, l) = s.product_state(i);
            assert_eq!(s.index(n, k, l), i);
        }
    }

    #[test]
    fn readout_resonator_is_dispersive() {
        let s = SystemSpec::default();
        assert!(s.readout_resonator.dispersive_ratio(&s.transmon) < 0.1);
    }
}
