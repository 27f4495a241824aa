//! Lindblad dynamics of the transmon under a QCR bias pulse.
//!
//! By default the dissipators act on the bare transmon ladder (dimension
//! `n_levels`). [`Basis::Dressed`] keeps the two resonators and lets the jumps
//! connect dressed states that differ by one transmon excitation.

mod density;
mod generator;
mod pulse;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use density::DensityMatrix;
pub use generator::{Generator, Jump};
pub use pulse::{pulse_voltage, BiasPulse};

use crate::error::{invalid, Error, Result};
use crate::qcr::{transition_rates, CouplingSpec, JunctionSpec, RateTable};
use crate::system::{diagonalize, transmon_energies, SystemSpec};
use crate::thermometry::{fit_gibbs, renormalize_first, MEASURED_STATES};

/// Default integration step in ns.
pub const DEFAULT_DT: f64 = 0.1;

/// Trace drift or negativity beyond this aborts an evolution.
const ABORT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    /// Transmon ladder only.
    #[default]
    Transmon,
    /// Full transmon ⊗ resonator space in the dressed eigenbasis.
    Dressed,
}

/// Hilbert space and bookkeeping shared by all evolutions of one system.
#[derive(Debug, Clone)]
pub struct Model {
    pub basis: Basis,
    /// Eigenfrequencies in GHz.
    pub energies: Vec<f64>,
    /// Bare transmon level of every basis state.
    pub transmon_labels: Vec<usize>,
    pub n_transmon: usize,
    /// `(m, lower, upper)`: basis indices of a level-m state and its m+1 partner.
    ladder_pairs: Vec<(usize, usize, usize)>,
}

impl Model {
    pub fn new(system: &SystemSpec, basis: Basis) -> Result<Self> {
        system.validate()?;
        let nt = system.transmon.n_levels;
        match basis {
            Basis::Transmon => {
                let energies = transmon_energies(&system.transmon);
                let ladder_pairs = (0..nt - 1).map(|m| (m, m, m + 1)).collect();
                Ok(Self {
                    basis,
                    energies,
                    transmon_labels: (0..nt).collect(),
                    n_transmon: nt,
                    ladder_pairs,
                })
            }
            Basis::Dressed => {
                let spectrum = diagonalize(system)?;
                let mut ladder_pairs = Vec::new();
                for (i, &(n, k, l)) in spectrum.labels.iter().enumerate() {
                    if n + 1 < nt {
                        let j = spectrum
                            .dressed_index((n + 1, k, l))
                            .expect("labels form a bijection");
                        ladder_pairs.push((n, i, j));
                    }
                }
                Ok(Self {
                    basis,
                    transmon_labels: spectrum.transmon_labels(),
                    energies: spectrum.energies,
                    n_transmon: nt,
                    ladder_pairs,
                })
            }
        }
    }

    pub fn transmon(system: &SystemSpec) -> Result<Self> {
        Self::new(system, Basis::Transmon)
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Generator whose jumps carry the rates of `table` on every transmon transition.
    pub fn generator(&self, table: &RateTable) -> Result<Generator> {
        if table.pairs.len() + 1 != self.n_transmon {
            return Err(Error::Range(format!(
                "rate table has {} transitions, model needs {}",
                table.pairs.len(),
                self.n_transmon - 1
            )));
        }
        let mut jumps = Vec::with_capacity(2 * self.ladder_pairs.len());
        for &(m, lower, upper) in &self.ladder_pairs {
            let pair = &table.pairs[m];
            jumps.push(Jump {
                from: upper,
                to: lower,
                rate: pair.gamma_down,
            });
            jumps.push(Jump {
                from: lower,
                to: upper,
                rate: pair.gamma_up,
            });
        }
        Generator::new(self.energies.clone(), jumps)
    }

    /// Populations of the bare transmon levels.
    pub fn transmon_populations(&self, rho: &DMatrix<Complex64>) -> Vec<f64> {
        let mut p = vec![0.0; self.n_transmon];
        for (i, &n) in self.transmon_labels.iter().enumerate() {
            p[n] += rho[(i, i)].re;
        }
        p
    }

    pub fn initial_state(&self, init: &InitialState) -> Result<DensityMatrix> {
        match *init {
            InitialState::Gibbs(t) => {
                if !(t > 0.0) {
                    return Err(invalid("initial", "Gibbs temperature must be > 0"));
                }
                DensityMatrix::gibbs(&self.energies, t)
            }
            InitialState::Level(n) => {
                if n >= self.n_transmon {
                    return Err(invalid("initial", format!("level {n} outside the transmon truncation")));
                }
                let idx = match self.basis {
                    Basis::Transmon => n,
                    // lowest-energy basis state carrying transmon label n
                    Basis::Dressed => (0..self.dim())
                        .filter(|&i| self.transmon_labels[i] == n)
                        .min_by(|&a, &b| self.energies[a].total_cmp(&self.energies[b]))
                        .expect("every transmon level is present"),
                };
                DensityMatrix::basis(idx, self.dim())
            }
        }
    }
}

/// Initial state spec: `gibbs:<T_K>` or `level:<n>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InitialState {
    Gibbs(f64),
    Level(usize),
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState::Gibbs(0.11)
    }
}

impl FromStr for InitialState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| invalid("initial", format!("expected gibbs:<T_K> or level:<n>, got `{s}`")))?;
        match kind.trim() {
            "gibbs" => value
                .trim()
                .parse::<f64>()
                .map(InitialState::Gibbs)
                .map_err(|e| invalid("initial", format!("bad temperature `{value}`: {e}"))),
            "level" => value
                .trim()
                .parse::<usize>()
                .map(InitialState::Level)
                .map_err(|e| invalid("initial", format!("bad level `{value}`: {e}"))),
            other => Err(invalid("initial", format!("unknown initial state kind `{other}`"))),
        }
    }
}

impl TryFrom<String> for InitialState {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<InitialState> for String {
    fn from(s: InitialState) -> String {
        s.to_string()
    }
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialState::Gibbs(t) => write!(f, "gibbs:{t}"),
            InitialState::Level(n) => write!(f, "level:{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    pub basis: Basis,
    /// Record every n-th step.
    pub sample_every: usize,
    /// Fit a Gibbs temperature to every recorded sample.
    pub fit_temperatures: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            basis: Basis::Transmon,
            sample_every: 1,
            fit_temperatures: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// ns
    pub times: Vec<f64>,
    /// Transmon populations at each sample.
    pub populations: Vec<Vec<f64>>,
    /// Closest-Gibbs temperature (K) of the four-state-normalized populations.
    pub temperatures: Vec<Option<f64>>,
    /// Final state in the lab frame.
    pub final_state: DensityMatrix,
}

impl Trajectory {
    pub fn final_populations(&self) -> &[f64] {
        self.populations.last().expect("trajectory has at least one sample")
    }

    /// Final g, e, f, h populations renormalized to unit sum.
    pub fn final_four_state(&self) -> Vec<f64> {
        renormalize_first(self.final_populations(), MEASURED_STATES)
    }
}

fn steps_for(span: f64, dt: f64) -> Option<usize> {
    let n = (span / dt).round();
    ((n * dt - span).abs() <= 1e-9 * span.max(1.0)).then_some(n as usize)
}

pub fn evolve(
    rho0: &DensityMatrix,
    system: &SystemSpec,
    junction: &JunctionSpec,
    coupling: &CouplingSpec,
    pulse: &BiasPulse,
    dt: f64,
    t_end: f64,
) -> Result<Trajectory> {
    evolve_with(rho0, system, junction, coupling, pulse, dt, t_end, &EvolveOptions::default())
}

/// Evolve `rho0` for `t_end` ns with piecewise-constant rates evaluated at the
/// bias of each step's midpoint.
#[allow(clippy::too_many_arguments)]
pub fn evolve_with(
    rho0: &DensityMatrix,
    system: &SystemSpec,
    junction: &JunctionSpec,
    coupling: &CouplingSpec,
    pulse: &BiasPulse,
    dt: f64,
    t_end: f64,
    options: &EvolveOptions,
) -> Result<Trajectory> {
    junction.validate()?;
    coupling.validate()?;
    pulse.validate()?;
    let model = Model::new(system, options.basis)?;
    let schedule = RateSchedule::new(&model, system, junction, coupling);
    run(rho0, &model, schedule, pulse, dt, t_end, options)
}

/// Memoized generators keyed on bias voltage.
struct RateSchedule<'a> {
    model: &'a Model,
    system: &'a SystemSpec,
    junction: &'a JunctionSpec,
    coupling: &'a CouplingSpec,
    cache: HashMap<u64, Generator>,
}

impl<'a> RateSchedule<'a> {
    fn new(model: &'a Model, system: &'a SystemSpec, junction: &'a JunctionSpec, coupling: &'a CouplingSpec) -> Self {
        Self {
            model,
            system,
            junction,
            coupling,
            cache: HashMap::new(),
        }
    }

    fn generator(&mut self, v: f64) -> Result<&Generator> {
        // +0.0 and -0.0 share an entry
        let key = (v + 0.0).to_bits();
        if !self.cache.contains_key(&key) {
            let table = transition_rates(self.system, self.junction, self.coupling, v)?;
            let g = self.model.generator(&table)?;
            self.cache.insert(key, g);
        }
        Ok(&self.cache[&key])
    }
}

fn run(
    rho0: &DensityMatrix,
    model: &Model,
    mut schedule: RateSchedule<'_>,
    pulse: &BiasPulse,
    dt: f64,
    t_end: f64,
    options: &EvolveOptions,
) -> Result<Trajectory> {
    if rho0.dim() != model.dim() {
        return Err(Error::Range(format!(
            "initial state has dimension {}, model has {}",
            rho0.dim(),
            model.dim()
        )));
    }
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(invalid("dt", "dt must be > 0 and t_end >= 0"));
    }
    let steps = steps_for(t_end, dt).ok_or_else(|| invalid("dt", "t_end must be a multiple of dt"))?;
    if !pulse.is_idle() && pulse.rise_time == 0.0 {
        // rate switches must land on step boundaries
        let half = 0.5 * pulse.period;
        if steps_for(half, dt).is_none() || steps_for(pulse.duration, dt).is_none() {
            return Err(invalid(
                "dt",
                format!("dt = {dt} ns must divide the half period ({half} ns) and the pulse duration"),
            ));
        }
    }
    let sample_every = options.sample_every.max(1);
    let fit_spec = crate::system::TransmonSpec {
        n_levels: model.n_transmon,
        ..schedule.system.transmon
    };

    let mut rho = rho0.matrix().clone();
    let capacity = steps / sample_every + 2;
    let mut times = Vec::with_capacity(capacity);
    let mut populations = Vec::with_capacity(capacity);
    let mut temperatures = Vec::with_capacity(capacity);

    let mut record = |step: usize, rho: &DMatrix<Complex64>| -> Result<()> {
        let t = step as f64 * dt;
        let trace = rho.trace().re;
        let state = DensityMatrix::from_raw(rho.clone());
        let min_eigenvalue = state.min_eigenvalue();
        if (trace - 1.0).abs() > ABORT_TOL || min_eigenvalue < -ABORT_TOL {
            return Err(Error::Integrator {
                step,
                time: t,
                trace,
                min_eigenvalue,
            });
        }
        let p = model.transmon_populations(rho);
        let temp = if options.fit_temperatures && model.n_transmon >= MEASURED_STATES {
            fit_gibbs(&renormalize_first(&p, MEASURED_STATES), &fit_spec)
                .ok()
            .map(|f| f.temperature)
        } else {
            None
        };
        times.push(t);
        populations.push(p);
        temperatures.push(temp);
        Ok(())
    };

    record(0, &rho)?;
    for step in 0..steps {
        let v = pulse_voltage(pulse, (step as f64 + 0.5) * dt);
        let g = schedule.generator(v)?;
        g.rk4_step(&mut rho, dt);
        if (step + 1) % sample_every == 0 || step + 1 == steps {
            record(step + 1, &rho)?;
        }
    }

    let idle = schedule.generator(0.0)?;
    let final_state = DensityMatrix::from_raw(idle.to_lab_frame(&rho, steps as f64 * dt));
    Ok(Trajectory {
        times,
        populations,
        temperatures,
        final_state,
    })
}

/// Fixed point of the generator at constant bias `v`.
pub fn steady_state(
    system: &SystemSpec,
    junction: &JunctionSpec,
    coupling: &CouplingSpec,
    v: f64,
) -> Result<DensityMatrix> {
    let model = Model::transmon(system)?;
    let table = transition_rates(system, junction, coupling, v)?;
    model.generator(&table)?.steady_state()
}
