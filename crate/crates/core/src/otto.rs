//! Four-stroke quantum Otto engine with the QCR as both baths.
//!
//! 1. isochoric heating at `omega_max`, bias `v_hot` (above the gap)
//! 2. adiabatic lowering to `omega_min`, QCR off
//! 3. isochoric cooling at `omega_min`, bias `v_cold` (below the gap)
//! 4. adiabatic return to `omega_max`
//!
//! Adiabats are ideal: the whole ladder is rescaled by `omega / omega_ge` and
//! populations are unchanged. Heat is positive into the working medium, work
//! positive when extracted.

use serde::{Deserialize, Serialize};

use crate::dynamics::{DensityMatrix, Generator};
use crate::error::{invalid, Error, Result};
use crate::qcr::{effective_temperature, ladder_rates, CouplingSpec, JunctionSpec};
use crate::system::SystemSpec;
use crate::units::AJ_PER_GHZ;

/// Successive-cycle trace distance below which the limit cycle is reached.
pub const LIMIT_CYCLE_TOL: f64 = 1e-6;
const FIRST_LAW_TOL: f64 = 1e-8;
const STATE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OttoSpec {
    /// GHz
    pub omega_max: f64,
    /// GHz
    pub omega_min: f64,
    /// mV
    pub v_hot: f64,
    /// mV
    pub v_cold: f64,
    /// ns
    pub t_isochore: f64,
    /// ns; bookkeeping only for ideal adiabats
    pub t_adiabat: f64,
    pub n_cycles: usize,
    /// Working-medium truncation.
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// ns
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_levels() -> usize {
    6
}

fn default_dt() -> f64 {
    crate::dynamics::DEFAULT_DT
}

impl Default for OttoSpec {
    fn default() -> Self {
        Self {
            omega_max: 4.09,
            omega_min: 3.0,
            v_hot: 1.2,
            v_cold: 0.2,
            t_isochore: 100.0,
            t_adiabat: 20.0,
            n_cycles: 20,
            levels: default_levels(),
            dt: default_dt(),
        }
    }
}

impl OttoSpec {
    pub fn validate(&self, junction: &JunctionSpec) -> Result<()> {
        if !(self.omega_min > 0.0 && self.omega_min < self.omega_max && self.omega_max.is_finite()) {
            return Err(invalid("otto.omega_min", "need 0 < omega_min < omega_max"));
        }
        let gap = junction.gap_voltage();
        if !(self.v_hot.abs() > gap) {
            return Err(invalid("otto.v_hot", format!("|v_hot| must exceed the gap voltage {gap} mV")));
        }
        if !(self.v_cold.abs() < gap) {
            return Err(invalid("otto.v_cold", format!("|v_cold| must be below the gap voltage {gap} mV")));
        }
        if !(self.t_isochore > 0.0 && self.t_adiabat > 0.0) {
            return Err(invalid("otto.t_isochore", "stroke durations must be > 0"));
        }
        if self.n_cycles == 0 {
            return Err(invalid("otto.n_cycles", "must be >= 1"));
        }
        if self.levels < 2 {
            return Err(invalid("otto.levels", "must be >= 2"));
        }
        if !(self.dt > 0.0) || isochore_steps(self).is_none() {
            return Err(invalid("otto.dt", "must be > 0 and divide t_isochore"));
        }
        Ok(())
    }
}

fn isochore_steps(spec: &OttoSpec) -> Option<usize> {
    let n = (spec.t_isochore / spec.dt).round();
    (n >= 1.0 && (n * spec.dt - spec.t_isochore).abs() <= 1e-9 * spec.t_isochore).then_some(n as usize)
}

/// `1 - omega_min / omega_max`.
pub fn frequency_efficiency(spec: &OttoSpec) -> f64 {
    1.0 - spec.omega_min / spec.omega_max
}

pub fn carnot_efficiency(t_cold: f64, t_hot: f64) -> f64 {
    1.0 - t_cold / t_hot
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleRecord {
    /// 1-based
    pub cycle: usize,
    /// Heat absorbed on the hot isochore, GHz (times h).
    pub q_hot: f64,
    /// Heat absorbed on the cold isochore, GHz.
    pub q_cold: f64,
    /// Work extracted over both adiabats, GHz.
    pub work: f64,
    /// `work / q_hot`; NaN when no heat is absorbed from the hot bath.
    pub eta: f64,
    /// Internal-energy change over the cycle, GHz.
    pub delta_u: f64,
    /// Trace distance between the states at the start and end of the cycle.
    pub distance: f64,
}

impl CycleRecord {
    /// `|Q_h + Q_c - W - ΔU|` relative to the largest term.
    pub fn first_law_residual(&self) -> f64 {
        let scale = self.q_hot.abs().max(self.q_cold.abs()).max(self.work.abs()).max(f64::MIN_POSITIVE);
        (self.q_hot + self.q_cold - self.work - self.delta_u).abs() / scale
    }
}

#[derive(Debug, Clone)]
pub struct OttoResult {
    pub cycles: Vec<CycleRecord>,
    /// Effective temperature of the hot bath at `omega_max`, K.
    pub t_hot: f64,
    /// Effective temperature of the cold bath at `omega_min`, K.
    pub t_cold: f64,
    pub eta_carnot: f64,
    pub eta_frequency: f64,
    /// First cycle whose end state matched its start within [`LIMIT_CYCLE_TOL`].
    pub limit_cycle_at: Option<usize>,
    pub final_state: DensityMatrix,
}

impl OttoResult {
    pub fn limit_cycle(&self) -> bool {
        self.cycles.last().is_some_and(|c| c.distance < LIMIT_CYCLE_TOL)
    }

    pub fn last(&self) -> &CycleRecord {
        self.cycles.last().expect("at least one cycle")
    }

    /// Efficiency of the final cycle.
    pub fn eta_limit(&self) -> f64 {
        self.last().eta
    }
}

/// Working-medium ladder at qubit frequency `omega`.
pub struct Ladder {
    pub energies: Vec<f64>,
    pub transitions: Vec<f64>,
}

pub fn ladder_at(system: &SystemSpec, levels: usize, omega: f64) -> Result<Ladder> {
    let t = &system.transmon;
    let scale = omega / t.omega_ge;
    let transitions: Vec<f64> = (0..levels - 1).map(|m| scale * t.transition_frequency(m)).collect();
    if transitions.iter().any(|&w| !(w > 0.0)) {
        return Err(invalid("otto.levels", "ladder has non-positive transition frequencies"));
    }
    let mut energies = Vec::with_capacity(levels);
    energies.push(0.0);
    for w in &transitions {
        energies.push(energies.last().unwrap() + w);
    }
    Ok(Ladder { energies, transitions })
}

fn energy(p: &[f64], e: &[f64]) -> f64 {
    p.iter().zip(e).map(|(p, e)| p * e).sum()
}

fn populations(rho: &nalgebra::DMatrix<num_complex::Complex64>) -> Vec<f64> {
    (0..rho.nrows()).map(|i| rho[(i, i)].re).collect()
}

fn check_state(rho: &nalgebra::DMatrix<num_complex::Complex64>, step: usize, time: f64) -> Result<()> {
    let state = DensityMatrix::from_raw(rho.clone());
    let trace = state.trace();
    let min_eigenvalue = state.min_eigenvalue();
    if (trace - 1.0).abs() > STATE_TOL || min_eigenvalue < -STATE_TOL {
        return Err(Error::Integrator {
            step,
            time,
            trace,
            min_eigenvalue,
        });
    }
    Ok(())
}

/// Run `spec.n_cycles` Otto cycles starting from the cold-bath fixed point.
pub fn run_cycle(spec: &OttoSpec, system: &SystemSpec, junction: &JunctionSpec, coupling: &CouplingSpec) -> Result<OttoResult> {
    system.validate()?;
    junction.validate()?;
    coupling.validate()?;
    spec.validate(junction)?;
    let reset = coupling
        .purcell_filter
        .then_some((system.reset_resonator.g, system.reset_resonator.omega));

    let hot = ladder_at(system, spec.levels, spec.omega_max)?;
    let cold = ladder_at(system, spec.levels, spec.omega_min)?;
    let hot_rates = ladder_rates(&hot.transitions, reset, junction, coupling, spec.v_hot)?;
    let cold_rates = ladder_rates(&cold.transitions, reset, junction, coupling, spec.v_cold)?;
    let t_hot = effective_temperature(&hot_rates.pairs[0])?;
    let t_cold = effective_temperature(&cold_rates.pairs[0])?;

    let split = |t: &crate::qcr::RateTable| -> (Vec<f64>, Vec<f64>) { t.pairs.iter().map(|p| (p.gamma_down, p.gamma_up)).unzip() };
    let (hd, hu) = split(&hot_rates);
    let (cd, cu) = split(&cold_rates);
    let hot_gen = Generator::ladder(hot.energies.clone(), &hd, &hu)?;
    let cold_gen = Generator::ladder(cold.energies.clone(), &cd, &cu)?;
    let steps = isochore_steps(spec).expect("validated");

    let mut rho = cold_gen.steady_state()?.into_matrix();
    let mut cycles = Vec::with_capacity(spec.n_cycles);
    let mut limit_cycle_at = None;
    let mut clock = 0.0;
    let cycle_time = 2.0 * (spec.t_isochore + spec.t_adiabat);
    for cycle in 1..=spec.n_cycles {
        let start = rho.clone();
        let p0 = populations(&rho);
        let u0 = energy(&p0, &hot.energies);

        hot_gen.propagate(&mut rho, spec.dt, steps);
        check_state(&rho, steps, clock + spec.t_isochore)?;
        let p1 = populations(&rho);
        let q_hot = energy(&p1, &hot.energies) - u0;

        // adiabat: populations frozen, levels move
        let w_down = energy(&p1, &cold.energies) - energy(&p1, &hot.energies);

        cold_gen.propagate(&mut rho, spec.dt, steps);
        check_state(&rho, steps, clock + 2.0 * spec.t_isochore + spec.t_adiabat)?;
        let p3 = populations(&rho);
        let q_cold = energy(&p3, &cold.energies) - energy(&p1, &cold.energies);

        let w_up = energy(&p3, &hot.energies) - energy(&p3, &cold.energies);
        let work = -(w_down + w_up);
        let delta_u = energy(&p3, &hot.energies) - u0;

        let distance = DensityMatrix::from_raw(start).trace_distance(&DensityMatrix::from_raw(rho.clone()));
        if distance < LIMIT_CYCLE_TOL && limit_cycle_at.is_none() {
            limit_cycle_at = Some(cycle);
        }
        let record = CycleRecord {
            cycle,
            q_hot,
            q_cold,
            work,
            eta: if q_hot > 0.0 { work / q_hot } else { f64::NAN },
            delta_u,
            distance,
        };
        if record.first_law_residual() > FIRST_LAW_TOL {
            return Err(Error::Range(format!(
                "first law violated in cycle {cycle}: residual {:e}",
                record.first_law_residual()
            )));
        }
        cycles.push(record);
        clock += cycle_time;
    }

    Ok(OttoResult {
        cycles,
        t_hot,
        t_cold,
        eta_carnot: carnot_efficiency(t_cold, t_hot),
        eta_frequency: frequency_efficiency(spec),
        limit_cycle_at,
        final_state: DensityMatrix::from_raw(rho),
    })
}

/// Convert an energy in GHz (times h) to aJ.
pub fn ghz_to_aj(e: f64) -> f64 {
    e * AJ_PER_GHZ
}
