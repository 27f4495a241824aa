//! Lindblad generator in an energy eigenbasis with incoherent jumps between
//! eigenstates:
//!
//! ```text
//! dρ/dt = -2πi [H, ρ] + Σ_j γ_j ( L_j ρ L_j† - ½ {L_j† L_j, ρ} ),   L_j = |to⟩⟨from|
//! ```
//!
//! Because each `L_j` connects two eigenstates of `H`, the dissipator commutes
//! with the free evolution. Time stepping therefore runs in the interaction
//! picture (dissipator only) and the free phases are restored exactly on
//! output.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::density::DensityMatrix;
use crate::error::{Error, Result};

const TWO_PI: f64 = std::f64::consts::TAU;

/// Largest dimension for which the steady state is found from the full
/// vectorized generator; above it the population block is solved instead.
const VECTORIZED_MAX_DIM: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub from: usize,
    pub to: usize,
    /// 1/ns
    pub rate: f64,
}

#[derive(Debug, Clone)]
pub struct Generator {
    energies: Vec<f64>,
    jumps: Vec<Jump>,
    out_rates: Vec<f64>,
}

impl Generator {
    /// `energies` in GHz; the Hamiltonian is diagonal in this basis.
    pub fn new(energies: Vec<f64>, jumps: Vec<Jump>) -> Result<Self> {
        let d = energies.len();
        if d == 0 {
            return Err(Error::Range("generator needs at least one level".into()));
        }
        let mut out_rates = vec![0.0; d];
        for j in &jumps {
            if j.from >= d || j.to >= d || j.from == j.to {
                return Err(Error::Range(format!("jump {j:?} invalid for dimension {d}")));
            }
            if !(j.rate >= 0.0 && j.rate.is_finite()) {
                return Err(Error::Range(format!("jump rate must be finite and >= 0: {j:?}")));
            }
            out_rates[j.from] += j.rate;
        }
        Ok(Self {
            energies,
            jumps,
            out_rates,
        })
    }

    /// Birth–death ladder: `down[m]` drives `m+1 -> m`, `up[m]` drives `m -> m+1`.
    pub fn ladder(energies: Vec<f64>, down: &[f64], up: &[f64]) -> Result<Self> {
        if down.len() != up.len() || down.len() + 1 != energies.len() {
            return Err(Error::Range("ladder rates must have one entry per transition".into()));
        }
        let mut jumps = Vec::with_capacity(2 * down.len());
        for m in 0..down.len() {
            jumps.push(Jump {
                from: m + 1,
                to: m,
                rate: down[m],
            });
            jumps.push(Jump {
                from: m,
                to: m + 1,
                rate: up[m],
            });
        }
        Self::new(energies, jumps)
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn has_dissipation(&self) -> bool {
        self.jumps.iter().any(|j| j.rate > 0.0)
    }

    /// Dissipative part of the generator acting on `rho`.
    pub fn dissipator(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let d = self.dim();
        let mut out = DMatrix::from_fn(d, d, |i, j| rho[(i, j)] * (-0.5 * (self.out_rates[i] + self.out_rates[j])));
        for jump in &self.jumps {
            out[(jump.to, jump.to)] += rho[(jump.from, jump.from)] * jump.rate;
        }
        out
    }

    /// Full generator (coherent + dissipative) acting on `rho`.
    pub fn apply(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let mut out = self.dissipator(rho);
        let d = self.dim();
        for i in 0..d {
            for j in 0..d {
                let w = TWO_PI * (self.energies[i] - self.energies[j]);
                out[(i, j)] += Complex64::new(0.0, -w) * rho[(i, j)];
            }
        }
        out
    }

    /// Frobenius norm of the generator applied to `rho`.
    pub fn residual(&self, rho: &DensityMatrix) -> f64 {
        self.apply(rho.matrix()).norm()
    }

    /// One classical fourth-order Runge–Kutta step of the interaction-picture
    /// equation `dρ/dt = D[ρ]`.
    pub fn rk4_step(&self, rho: &mut DMatrix<Complex64>, dt: f64) {
        let k1 = self.dissipator(rho);
        let k2 = self.dissipator(&(&*rho + &k1 * Complex64::new(0.5 * dt, 0.0)));
        let k3 = self.dissipator(&(&*rho + &k2 * Complex64::new(0.5 * dt, 0.0)));
        let k4 = self.dissipator(&(&*rho + &k3 * Complex64::new(dt, 0.0)));
        let sum = k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4;
        *rho += sum * Complex64::new(dt / 6.0, 0.0);
    }

    /// Take `steps` interaction-picture RK4 steps.
    pub fn propagate(&self, rho: &mut DMatrix<Complex64>, dt: f64, steps: usize) {
        for _ in 0..steps {
            self.rk4_step(rho, dt);
        }
    }

    /// Map an interaction-picture state at time `t` (ns) to the lab frame.
    pub fn to_lab_frame(&self, rho: &DMatrix<Complex64>, t: f64) -> DMatrix<Complex64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| {
            let phase = -TWO_PI * (self.energies[i] - self.energies[j]) * t;
            rho[(i, j)] * Complex64::from_polar(1.0, phase)
        })
    }

    /// Unique fixed point of the generator.
    pub fn steady_state(&self) -> Result<DensityMatrix> {
        if !self.has_dissipation() {
            return Err(Error::SingularGenerator("all jump rates are zero".into()));
        }
        let rho = if self.dim() <= VECTORIZED_MAX_DIM {
            self.steady_state_vectorized()?
        } else {
            self.steady_state_populations()?
        };
        let herm = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
        let tr = herm.trace();
        let state = DensityMatrix::from_raw(herm / tr);
        state
            .check(1e-10, 1e-9, 1e-9)
            .map_err(|e| Error::SingularGenerator(format!("fixed point is not a valid state: {e}")))?;
        Ok(state)
    }

    fn steady_state_vectorized(&self) -> Result<DMatrix<Complex64>> {
        let d = self.dim();
        let n = d * d;
        let zero = Complex64::new(0.0, 0.0);
        let mut a = DMatrix::from_element(n, n, zero);
        let mut basis = DMatrix::from_element(d, d, zero);
        for col in 0..n {
            let (i, j) = (col % d, col / d);
            basis[(i, j)] = Complex64::new(1.0, 0.0);
            let image = self.apply(&basis);
            basis[(i, j)] = zero;
            for (row, v) in image.iter().enumerate() {
                a[(row, col)] = *v;
            }
        }
        // the (0,0) equation is implied by trace conservation; swap it for Tr ρ = 1
        for col in 0..n {
            a[(0, col)] = zero;
        }
        for k in 0..d {
            a[(0, k + k * d)] = Complex64::new(1.0, 0.0);
        }
        let mut b = DVector::from_element(n, zero);
        b[0] = Complex64::new(1.0, 0.0);

        let lu = a.clone().lu();
        let mut x = lu
            .solve(&b)
            .ok_or_else(|| Error::SingularGenerator("vectorized generator is singular".into()))?;
        for _ in 0..2 {
            let r = &b - &a * &x;
            if let Some(dx) = lu.solve(&r) {
                x += dx;
            }
        }
        if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::SingularGenerator("non-finite fixed point".into()));
        }
        Ok(DMatrix::from_fn(d, d, |i, j| x[i + j * d]))
    }

    fn steady_state_populations(&self) -> Result<DMatrix<Complex64>> {
        let d = self.dim();
        let mut w = DMatrix::<f64>::zeros(d, d);
        for j in &self.jumps {
            w[(j.to, j.from)] += j.rate;
            w[(j.from, j.from)] -= j.rate;
        }
        for c in 0..d {
            w[(0, c)] = 1.0;
        }
        let mut b = DVector::zeros(d);
        b[0] = 1.0;
        let lu = w.clone().lu();
        let mut p = lu
            .solve(&b)
            .ok_or_else(|| Error::SingularGenerator("rate matrix is singular".into()))?;
        let r = &b - &w * &p;
        if let Some(dp) = lu.solve(&r) {
            p += dp;
        }
        Ok(DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                Complex64::new(p[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
    }
}
