//! Quantum-circuit refrigerator: NIS tunnelling spectral function and the
//! transmon transition rates it induces.
//!
//! A quasiparticle tunnelling from the normal metal (occupation `f` at `t_n`)
//! into the Dynes-broadened superconductor while absorbing energy `E` from the
//! circuit contributes
//!
//! ```text
//! F(E, V) = Σ_{τ=±1} ∫ dε n_S(ε) f(ε - τeV - E) [1 - f(ε)]
//! ```
//!
//! Positive `E` means the circuit loses energy (decay), negative `E` means it
//! gains energy (excitation). Energies are in meV and biases in mV, so `eV`
//! in meV is numerically the bias in mV.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::{self, Tolerance};
use crate::system::{SystemSpec, TransmonSpec};
use crate::units::{photon_energy, H_OVER_KB, KB_MEV_PER_K};

/// Width of the integration window beyond the Fermi edges, in units of k_B T.
const FERMI_WINDOW: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JunctionSpec {
    /// Superconducting gap in meV.
    pub delta: f64,
    /// Dynes parameter.
    pub gamma_d: f64,
    /// Tunnel resistance in kΩ.
    pub r_t: f64,
    /// Normal-metal electron temperature in K.
    pub t_n: f64,
}

impl Default for JunctionSpec {
    fn default() -> Self {
        Self {
            delta: 0.215,
            gamma_d: 2.3e-3,
            r_t: 13.8,
            t_n: 0.1,
        }
    }
}

impl JunctionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(invalid("junction.delta", "must be > 0"));
        }
        if !(self.gamma_d > 0.0 && self.gamma_d < 1.0) {
            return Err(invalid("junction.gamma_d", "must be in (0, 1)"));
        }
        if !(self.r_t > 0.0) {
            return Err(invalid("junction.r_t", "must be > 0"));
        }
        if !(self.t_n > 0.0) {
            return Err(invalid("junction.t_n", "must be > 0"));
        }
        Ok(())
    }

    /// Gap voltage Δ/e in mV.
    pub fn gap_voltage(&self) -> f64 {
        self.delta
    }

    fn kt(&self) -> f64 {
        KB_MEV_PER_K * self.t_n
    }
}

/// Calibrated rate scale. See [`crate::calibration`] for how the default was
/// obtained.
pub const CALIBRATED_KAPPA_EFF: f64 = 3.163_508_447_407_777e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    /// Rate scale in 1/ns: a transition with `F/Δ = 1` decays at `kappa_eff`.
    pub kappa_eff: f64,
    /// Scale rates by `g_1² / (f_m - f_1)²` through the reset resonator.
    pub purcell_filter: bool,
}

impl Default for CouplingSpec {
    fn default() -> Self {
        Self {
            kappa_eff: CALIBRATED_KAPPA_EFF,
            purcell_filter: false,
        }
    }
}

impl CouplingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_eff > 0.0) {
            return Err(invalid("coupling.kappa_eff", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePair {
    /// Decay rate `m+1 -> m` in 1/ns.
    pub gamma_down: f64,
    /// Excitation rate `m -> m+1` in 1/ns.
    pub gamma_up: f64,
    /// Transition frequency in GHz.
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    /// Bias voltage in mV.
    pub voltage: f64,
    /// Entry `m` describes the `m <-> m+1` transition.
    pub pairs: Vec<RatePair>,
}

impl RateTable {
    pub fn scaled(&self, factor: f64) -> RateTable {
        RateTable {
            voltage: self.voltage,
            pairs: self
                .pairs
                .iter()
                .map(|p| RatePair {
                    gamma_down: p.gamma_down * factor,
                    gamma_up: p.gamma_up * factor,
                    omega: p.omega,
                })
                .collect(),
        }
    }
}

/// Dynes-broadened BCS density of states at `eps` (in units of Δ).
pub fn dynes_dos(eps: f64, gamma_d: f64) -> f64 {
    let z = Complex64::new(eps, gamma_d);
    (z / (z * z - 1.0).sqrt()).re.abs()
}

/// `f(a) [1 - f(b)]` for Fermi functions at temperature `kt`, written to
/// saturate cleanly to zero instead of producing NaN.
#[inline]
fn occupancy_product(a: f64, b: f64, kt: f64) -> f64 {
    1.0 / ((1.0 + (a / kt).exp()) * (1.0 + (-b / kt).exp()))
}

fn gap_breaks(delta: f64, gamma_d: f64) -> Vec<f64> {
    let mut b = Vec::with_capacity(14);
    for s in [-1.0, 1.0] {
        b.push(s * delta);
        for w in [1.0, 10.0, 100.0] {
            b.push(s * delta * (1.0 + w * gamma_d));
            b.push(s * delta * (1.0 - w * gamma_d));
        }
    }
    b
}

/// Single-direction spectral function `∫ dε n_S(ε) f(ε - x) [1 - f(ε)]` in meV.
fn one_direction(x: f64, j: &JunctionSpec, tol: Tolerance) -> Result<f64> {
    let kt = j.kt();
    let lo = x.min(0.0) - FERMI_WINDOW * kt;
    let hi = x.max(0.0) + FERMI_WINDOW * kt;
    let mut breaks = gap_breaks(j.delta, j.gamma_d);
    breaks.extend([0.0, x]);
    let integrand = |eps: f64| dynes_dos(eps / j.delta, j.gamma_d) * occupancy_product(eps - x, eps, kt);
    Ok(quadrature::integrate(integrand, lo, hi, &breaks, tol)?.value)
}

/// Tunnelling spectral function `F(E, V)` in meV for an absorbed energy `e`
/// (meV) at bias `v` (mV). `F(E) ≈ E` for a normal junction at `E ≫ k_B T`.
pub fn tunnel_spectral_fn(e: f64, v: f64, junction: &JunctionSpec) -> Result<f64> {
    junction.validate()?;
    tunnel_spectral_fn_tol(e, v, junction, Tolerance::default())
}

pub fn tunnel_spectral_fn_tol(e: f64, v: f64, junction: &JunctionSpec, tol: Tolerance) -> Result<f64> {
    let forward = one_direction(e + v, junction, tol)?;
    let backward = one_direction(e - v, junction, tol)?;
    Ok(forward + backward)
}

fn purcell_factor(omega: f64, reset: Option<(f64, f64)>) -> f64 {
    match reset {
        Some((g, omega_r)) => g * g / ((omega - omega_r) * (omega - omega_r)),
        None => 1.0,
    }
}

/// Rates for an arbitrary ladder given its transition frequencies. Entry `m`
/// carries the `(m+1)` matrix-element factor. `reset` is `(g_1, f_1)` when the
/// Purcell filter applies.
pub fn ladder_rates(
    transitions: &[f64],
    reset: Option<(f64, f64)>,
    junction: &JunctionSpec,
    coupling: &CouplingSpec,
    v: f64,
) -> Result<RateTable> {
    junction.validate()?;
    coupling.validate()?;
    let mut pairs = Vec::with_capacity(transitions.len());
    for (m, &omega) in transitions.iter().enumerate() {
        let energy = photon_energy(omega);
        let scale = coupling.kappa_eff * (m + 1) as f64 * purcell_factor(omega, reset) / junction.delta;
        let down = tunnel_spectral_fn_tol(energy, v, junction, Tolerance::default())?;
        let up = tunnel_spectral_fn_tol(-energy, v, junction, Tolerance::default())?;
        pairs.push(RatePair {
            gamma_down: scale * down,
            gamma_up: scale * up,
            omega,
        });
    }
    Ok(RateTable { voltage: v, pairs })
}

/// Transition frequencies `f_ge + m α` of the bare transmon ladder.
pub fn transmon_transitions(spec: &TransmonSpec) -> Vec<f64> {
    (0..spec.n_levels - 1).map(|m| spec.transition_frequency(m)).collect()
}

pub fn transition_rates(
    system: &SystemSpec,
    junction: &JunctionSpec,
    coupling: &CouplingSpec,
    v: f64,
) -> Result<RateTable> {
    system.validate()?;
    let reset = coupling
        .purcell_filter
        .then_some((system.reset_resonator.g, system.reset_resonator.omega));
    ladder_rates(&transmon_transitions(&system.transmon), reset, junction, coupling, v)
}

/// Temperature at which a Gibbs state reproduces the rate ratio of `pair`.
pub fn effective_temperature(pair: &RatePair) -> Result<f64> {
    if !(pair.gamma_up > 0.0 && pair.gamma_down > pair.gamma_up) {
        return Err(Error::NonThermalRates {
            gamma_down: pair.gamma_down,
            gamma_up: pair.gamma_up,
        });
    }
    Ok(H_OVER_KB * pair.omega / (pair.gamma_down / pair.gamma_up).ln())
}

/// Current through the junction in nA at bias `v` (mV):
/// `I = (1 / e R_T) ∫ dε n_S(ε) [f(ε - eV) - f(ε)]`.
pub fn junction_current(v: f64, junction: &JunctionSpec) -> Result<f64> {
    junction.validate()?;
    if v == 0.0 {
        return Ok(0.0);
    }
    let kt = junction.kt();
    let lo = v.min(0.0) - FERMI_WINDOW * kt;
    let hi = v.max(0.0) + FERMI_WINDOW * kt;
    let mut breaks = gap_breaks(junction.delta, junction.gamma_d);
    breaks.extend([0.0, v]);
    let fermi = |x: f64| 1.0 / (1.0 + (x / kt).exp());
    let integrand = |eps: f64| dynes_dos(eps / junction.delta, junction.gamma_d) * (fermi(eps - v) - fermi(eps));
    let tol = Tolerance {
        abs: 1e-14,
        ..Tolerance::default()
    };
    let integral = quadrature::integrate(integrand, lo, hi, &breaks, tol)?.value;
    // meV / (e kΩ) = µA
    Ok(1e3 * integral / junction.r_t)
}

/// Gap and Dynes parameter extracted from an IV curve (V in mV, I in nA).
///
/// The gap is the half-width between the conductance edges on either side of
/// zero bias; the Dynes parameter is the ratio of the linear-fit conductance
/// inside `|V| < Δ/2e` to that outside `|V| > 1.5 Δ/e`.
pub fn extract_dynes(iv_curve: &[(f64, f64)]) -> Result<(f64, f64)> {
    if iv_curve.len() < 50 {
        return Err(Error::Range(format!(
            "IV curve needs at least 50 points, got {}",
            iv_curve.len()
        )));
    }
    let mut pts = iv_curve.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));

    // conductance at segment midpoints
    let g: Vec<(f64, f64)> = pts
        .windows(2)
        .filter(|w| w[1].0 > w[0].0)
        .map(|w| (0.5 * (w[0].0 + w[1].0), (w[1].1 - w[0].1) / (w[1].0 - w[0].0)))
        .collect();
    let gmax = g.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let gmin = g.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    // no conductance contrast, no plateau
    if gmin > 0.0 && gmax <= 2.0 * gmin {
        return Err(Error::NoGap);
    }

    // Thermal smearing moves the conductance peak above the gap and the
    // steepest rise below it; the edge is taken halfway between the two.
    let edge = |positive: bool| -> Option<f64> {
        let side = |x: f64| if positive { x > 0.0 } else { x < 0.0 };
        let idx = (0..g.len())
            .filter(|&i| side(g[i].0))
            .max_by(|&a, &b| g[a].1.total_cmp(&g[b].1))?;
        let peak = if idx == 0 || idx + 1 >= g.len() {
            g[idx].0
        } else {
            // parabola through the three samples around the maximum
            let (x0, y0) = g[idx - 1];
            let (x1, y1) = g[idx];
            let (x2, y2) = g[idx + 1];
            let d01 = (y1 - y0) / (x1 - x0);
            let d12 = (y2 - y1) / (x2 - x1);
            let curv = (d12 - d01) / (x2 - x0);
            if curv >= 0.0 {
                x1
            } else {
                (0.5 * (x0 + x1) - d01 / (2.0 * curv)).clamp(x0, x2)
            }
        };
        let sign = if positive { 1.0 } else { -1.0 };
        let rise = g
            .windows(2)
            .filter(|w| side(w[0].0) && side(w[1].0) && w[0].0.abs().max(w[1].0.abs()) <= peak.abs())
            .map(|w| (0.5 * (w[0].0 + w[1].0), sign * (w[1].1 - w[0].1) / (w[1].0 - w[0].0)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map_or(peak, |r| r.0);
        Some(0.5 * (peak + rise))
    };
    let (vp, vm) = match (edge(true), edge(false)) {
        (Some(p), Some(m)) => (p, m),
        _ => return Err(Error::Range("IV curve must cover both bias polarities".into())),
    };
    let delta = 0.5 * (vp - vm);

    let (vlo, vhi) = (pts[0].0, pts[pts.len() - 1].0);
    if vhi < 2.0 * delta || vlo > -2.0 * delta {
        return Err(Error::Range(format!(
            "IV curve spans [{vlo}, {vhi}] mV but must extend beyond ±2Δ/e = ±{} mV",
            2.0 * delta
        )));
    }

    let slope = |sel: &dyn Fn(f64) -> bool| -> Option<f64> {
        let s: Vec<(f64, f64)> = pts.iter().copied().filter(|p| sel(p.0)).collect();
        crate::thermometry::ols_slope(&s)
    };
    let inside = slope(&|v| v.abs() < 0.5 * delta).ok_or(Error::NoGap)?;
    let out_pos = slope(&|v| v > 1.5 * delta);
    let out_neg = slope(&|v| v < -1.5 * delta);
    let outside = match (out_pos, out_neg) {
        (Some(a), Some(b)) => 0.5 * (a + b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => return Err(Error::Range("no points outside the gap".into())),
    };
    let gamma_d = inside / outside;
    if !(gamma_d > 0.0 && gamma_d < 0.5) {
        return Err(Error::NoGap);
    }
    Ok((delta, gamma_d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dos_at_zero_energy() {
        let g = 2.3e-3;
        let v = dynes_dos(0.0, g);
        assert!((v - g / (1.0 + g * g).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn dos_is_even_and_tends_to_one() {
        for &e in &[0.2, 0.99, 1.0, 1.01, 3.0] {
            assert_eq!(dynes_dos(e, 1e-3), dynes_dos(-e, 1e-3));
        }
        assert!((dynes_dos(1e4, 2.3e-3) - 1.0).abs() < 1e-8);
        assert!((dynes_dos(-1e4, 2.3e-3) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn invalid_junction_rejected() {
        let j = JunctionSpec {
            gamma_d: 1.5,
            ..Default::default()
        };
        assert!(tunnel_spectral_fn(0.01, 0.0, &j).is_err());
    }

    #[test]
    fn effective_temperature_unit_log() {
        let pair = RatePair {
            gamma_down: std::f64::consts::E,
            gamma_up: 1.0,
            omega: 4.09,
        };
        let t = effective_temperature(&pair).unwrap();
        assert!((t - 0.0479924 * 4.09).abs() < 1e-12);
        assert!((t - 0.1963).abs() < 1e-4);
    }

    #[test]
    fn effective_temperature_degenerate() {
        let pair = RatePair {
            gamma_down: 1.0,
            gamma_up: 1.0,
            omega: 4.09,
        };
        assert!(matches!(
            effective_temperature(&pair),
            Err(Error::NonThermalRates { .. })
        ));
    }

    #[test]
    fn ohmic_line_has_no_gap() {
        let iv: Vec<(f64, f64)> = (0..101)
            .map(|i| {
                let v = -1.0 + 0.02 * i as f64;
                (v, v / 13.8 * 1e3)
            })
            .collect();
        assert!(matches!(extract_dynes(&iv), Err(Error::NoGap)));
    }

    #[test]
    fn too_few_points() {
        let iv: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, i as f64)).collect();
        assert!(matches!(extract_dynes(&iv), Err(Error::Range(_))));
    }
}
