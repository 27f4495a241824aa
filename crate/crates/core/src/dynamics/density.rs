use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Unit-trace, positive, Hermitian state over a finite Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: DMatrix<Complex64>,
}

const HERMITIAN_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-9;
const POSITIVITY_TOL: f64 = 1e-9;

impl DensityMatrix {
    /// Wrap a matrix after checking Hermiticity, unit trace and positivity.
    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self> {
        let state = Self { matrix };
        state.check(HERMITIAN_TOL, TRACE_TOL, POSITIVITY_TOL)?;
        Ok(state)
    }

    pub(crate) fn from_raw(matrix: DMatrix<Complex64>) -> Self {
        Self { matrix }
    }

    /// Diagonal state with the given populations.
    pub fn diagonal(populations: &[f64]) -> Result<Self> {
        let n = populations.len();
        let m = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(populations[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        Self::new(m)
    }

    /// Pure basis state `|level>`.
    pub fn basis(level: usize, dim: usize) -> Result<Self> {
        if level >= dim {
            return Err(Error::Range(format!("level {level} outside dimension {dim}")));
        }
        let mut p = vec![0.0; dim];
        p[level] = 1.0;
        Self::diagonal(&p)
    }

    /// Gibbs state for energies in GHz at temperature `t` (K).
    pub fn gibbs(energies: &[f64], t: f64) -> Result<Self> {
        Self::diagonal(&crate::thermometry::boltzmann(energies, t))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn hermiticity_residual(&self) -> f64 {
        let adj = self.matrix.adjoint();
        (&self.matrix - adj).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = hermitian_part(&self.matrix);
        SymmetricEigen::new(herm).eigenvalues.iter().copied().collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Check the state invariants at the given tolerances.
    pub fn check(&self, hermitian_tol: f64, trace_tol: f64, positivity_tol: f64) -> Result<()> {
        if !self.matrix.is_square() || self.dim() == 0 {
            return Err(Error::Range("density matrix must be square and non-empty".into()));
        }
        let h = self.hermiticity_residual();
        if h > hermitian_tol {
            return Err(Error::Range(format!("density matrix not Hermitian (residual {h:e})")));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > trace_tol {
            return Err(Error::Range(format!("density matrix trace {tr} != 1")));
        }
        let min = self.min_eigenvalue();
        if min < -positivity_tol {
            return Err(Error::Range(format!("density matrix has eigenvalue {min:e}")));
        }
        Ok(())
    }

    /// Uhlmann fidelity `(Tr sqrt(sqrt(ρ) σ sqrt(ρ)))²`.
    pub fn fidelity(&self, other: &DensityMatrix) -> f64 {
        let sqrt_rho = psd_sqrt(&self.matrix);
        let inner = &sqrt_rho * &other.matrix * &sqrt_rho;
        let eig = SymmetricEigen::new(hermitian_part(&inner));
        let s: f64 = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).sum();
        s * s
    }

    /// Trace distance `½ ||ρ - σ||₁`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        let diff = &self.matrix - &other.matrix;
        let eig = SymmetricEigen::new(hermitian_part(&diff));
        0.5 * eig.eigenvalues.iter().map(|l| l.abs()).sum::<f64>()
    }
}

fn hermitian_part(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

fn psd_sqrt(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let v = &eig.eigenvectors;
    let d = DMatrix::from_fn(v.ncols(), v.ncols(), |i, j| {
        if i == j {
            Complex64::new(eig.eigenvalues[i].max(0.0).sqrt(), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    v * d * v.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_invalid_states() {
        assert!(DensityMatrix::diagonal(&[0.5, 0.4]).is_err());
        assert!(DensityMatrix::diagonal(&[1.2, -0.2]).is_err());
        let mut m = DMatrix::from_element(2, 2, Complex64::new(0.0, 0.0));
        m[(0, 0)] = Complex64::new(0.5, 0.0);
        m[(1, 1)] = Complex64::new(0.5, 0.0);
        m[(0, 1)] = Complex64::new(0.1, 0.0);
        assert!(DensityMatrix::new(m).is_err());
    }

    #[test]
    fn fidelity_and_distance_of_identical_states() {
        let r = DensityMatrix::diagonal(&[0.7, 0.2, 0.1]).unwrap();
        assert!((r.fidelity(&r) - 1.0).abs() < 1e-12);
        assert!(r.trace_distance(&r) < 1e-15);
    }

    #[test]
    fn fidelity_of_diagonal_states_is_classical() {
        let a = DensityMatrix::diagonal(&[0.7, 0.3]).unwrap();
        let b = DensityMatrix::diagonal(&[0.4, 0.6]).unwrap();
        let classical = ((0.7f64 * 0.4).sqrt() + (0.3f64 * 0.6).sqrt()).powi(2);
        assert!((a.fidelity(&b) - classical).abs() < 1e-12);
        assert!((a.trace_distance(&b) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn pure_superposition_is_valid() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v = nalgebra::DVector::from_vec(vec![Complex64::new(h, 0.0), Complex64::new(0.0, h)]);
        let rho = DensityMatrix::new(&v * v.adjoint()).unwrap();
        assert!(rho.min_eigenvalue().abs() < 1e-12);
        let plus = DensityMatrix::diagonal(&[0.5, 0.5]).unwrap();
        assert!((rho.fidelity(&plus) - 0.5).abs() < 1e-12);
    }
}
