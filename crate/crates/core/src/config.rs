//! Experiment configuration in TOML.
//!
//! A config file only lists what differs from the defaults. Every key is
//! checked against the fully populated default config, so a typo is rejected
//! together with the closest valid key.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Basis, BiasPulse, InitialState};
use crate::error::{invalid, Error, Result};
use crate::otto::OttoSpec;
use crate::qcr::{CouplingSpec, JunctionSpec};
use crate::readout::{Folding, ReadoutGeometry};
use crate::system::{ResonatorSpec, SystemSpec, TransmonSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Rates,
    Evolve,
    Shots,
    Fit,
    Thermo,
    Otto,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Rates => "rates",
            Stage::Evolve => "evolve",
            Stage::Shots => "shots",
            Stage::Fit => "fit",
            Stage::Thermo => "thermo",
            Stage::Otto => "otto",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    /// ns
    pub dt: f64,
    /// Length of the recorded trajectory in ns.
    pub t_end: f64,
    pub initial: InitialState,
    pub basis: Basis,
    /// Trajectory rows are written every this many steps.
    pub sample_every: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            dt: crate::dynamics::DEFAULT_DT,
            t_end: 100.0,
            initial: InitialState::default(),
            basis: Basis::Transmon,
            sample_every: 10,
        }
    }
}

/// Bias grid of the rates table, mV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub v_min: f64,
    pub v_max: f64,
    pub v_step: f64,
}

impl Default for RatesConfig {
    fn default() -> Self {
        Self {
            v_min: 0.0,
            v_max: 1.2,
            v_step: 0.05,
        }
    }
}

impl RatesConfig {
    pub fn voltages(&self) -> Vec<f64> {
        grid(self.v_min, self.v_max, self.v_step)
    }
}

/// `start, start + step, ...` up to `stop`, rounded to 1e-9.
pub fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9).collect()
}

/// Pulse settings swept by the evolve stage; every combination is run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// mV
    pub amplitudes: Vec<f64>,
    /// ns
    pub durations: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            amplitudes: vec![1.2],
            durations: vec![100.0],
        }
    }
}

impl SweepConfig {
    /// `(amplitude, duration)` pairs, amplitude-major.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.amplitudes
            .iter()
            .flat_map(|&a| self.durations.iter().map(move |&d| (a, d)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutConfig {
    pub sigma: f64,
    /// Adjacent-mean distance in units of sigma.
    pub spacing: f64,
    pub h_variance_scale: f64,
    /// Shots per measured population vector.
    pub shots: usize,
    /// Shots per prepared state in the calibration set.
    pub calibration_shots: usize,
    /// Monte Carlo samples per component for the overlap correction.
    pub mc_samples: usize,
    pub folding: Folding,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        let g = ReadoutGeometry::default();
        Self {
            sigma: g.sigma,
            spacing: g.spacing,
            h_variance_scale: g.h_variance_scale,
            shots: 10_000,
            calibration_shots: 10_000,
            mc_samples: crate::readout::DEFAULT_MC_SAMPLES,
            folding: Folding::Truncate,
        }
    }
}

impl ReadoutConfig {
    pub fn geometry(&self) -> ReadoutGeometry {
        ReadoutGeometry {
            sigma: self.sigma,
            spacing: self.spacing,
            h_variance_scale: self.h_variance_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: String,
    pub stages: Vec<Stage>,
    pub transmon: TransmonSpec,
    pub reset_resonator: ResonatorSpec,
    pub readout_resonator: ResonatorSpec,
    pub junction: JunctionSpec,
    pub coupling: CouplingSpec,
    pub pulse: BiasPulse,
    pub evolve: EvolveConfig,
    pub rates: RatesConfig,
    pub sweep: SweepConfig,
    pub readout: ReadoutConfig,
    pub otto: OttoSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let system = SystemSpec::default();
        Self {
            seed: 42,
            output_dir: "out".into(),
            stages: vec![Stage::Rates, Stage::Evolve, Stage::Shots, Stage::Fit, Stage::Thermo],
            transmon: system.transmon,
            reset_resonator: system.reset_resonator,
            readout_resonator: system.readout_resonator,
            junction: JunctionSpec::default(),
            coupling: CouplingSpec::default(),
            pulse: BiasPulse::default(),
            evolve: EvolveConfig::default(),
            rates: RatesConfig::default(),
            sweep: SweepConfig::default(),
            readout: ReadoutConfig::default(),
            otto: OttoSpec::default(),
        }
    }
}

fn aligned(span: f64, dt: f64) -> bool {
    let n = (span / dt).round();
    (n * dt - span).abs() <= 1e-9 * span.max(1.0)
}

impl ExperimentConfig {
    pub fn system(&self) -> SystemSpec {
        SystemSpec {
            transmon: self.transmon,
            reset_resonator: self.reset_resonator,
            readout_resonator: self.readout_resonator,
        }
    }

    /// Check every block, whether or not its stage is scheduled.
    pub fn validate(&self) -> Result<()> {
        self.system().validate()?;
        self.junction.validate()?;
        self.coupling.validate()?;
        self.pulse.validate()?;
        self.otto.validate(&self.junction)?;
        self.readout.geometry().validate()?;

        let e = &self.evolve;
        if !(e.dt > 0.0) {
            return Err(invalid("evolve.dt", "must be > 0"));
        }
        if !(e.t_end >= 0.0) || !aligned(e.t_end, e.dt) {
            return Err(invalid("evolve.t_end", "must be >= 0 and a multiple of evolve.dt"));
        }
        if e.sample_every == 0 {
            return Err(invalid("evolve.sample_every", "must be >= 1"));
        }
        match e.initial {
            InitialState::Gibbs(t) if !(t > 0.0) => return Err(invalid("evolve.initial", "temperature must be > 0")),
            InitialState::Level(n) if n >= self.transmon.n_levels => {
                return Err(invalid("evolve.initial", "level outside the transmon truncation"))
            }
            _ => {}
        }

        let r = &self.rates;
        if !(r.v_step > 0.0 && r.v_max >= r.v_min) {
            return Err(invalid("rates.v_step", "need v_step > 0 and v_max >= v_min"));
        }
        if r.voltages().len() > 100_000 {
            return Err(invalid("rates.v_step", "grid has more than 100000 points"));
        }

        let s = &self.sweep;
        if s.amplitudes.is_empty() || s.durations.is_empty() {
            return Err(invalid("sweep.amplitudes", "amplitudes and durations must be non-empty"));
        }
        if s.amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(invalid("sweep.amplitudes", "must be finite"));
        }
        let half = 0.5 * self.pulse.period;
        for &d in &s.durations {
            if !(d >= 0.0) || !aligned(d, e.dt) {
                return Err(invalid("sweep.durations", "must be >= 0 and multiples of evolve.dt"));
            }
        }
        if self.pulse.rise_time == 0.0 && !aligned(half, e.dt) {
            return Err(invalid("evolve.dt", "must divide half the pulse period"));
        }

        let ro = &self.readout;
        if ro.shots == 0 {
            return Err(invalid("readout.shots", "must be > 0"));
        }
        if ro.calibration_shots < 10 {
            return Err(invalid("readout.calibration_shots", "must be >= 10"));
        }
        if ro.mc_samples < 100_000 {
            return Err(invalid("readout.mc_samples", "must be >= 100000"));
        }

        if self.stages.is_empty() {
            return Err(invalid("stages", "must list at least one stage"));
        }
        for (i, st) in self.stages.iter().enumerate() {
            let before = &self.stages[..i];
            let need: &[Stage] = match st {
                Stage::Shots => &[Stage::Evolve],
                Stage::Fit => &[Stage::Shots],
                Stage::Thermo => &[Stage::Evolve],
                _ => &[],
            };
            for n in need {
                if !before.contains(n) {
                    return Err(invalid(
                        "stages",
                        format!("stage `{}` needs `{}` earlier in the list", st.name(), n.name()),
                    ));
                }
            }
            if before.contains(st) {
                return Err(invalid("stages", format!("stage `{}` listed twice", st.name())));
            }
        }
        Ok(())
    }

    /// Fully resolved TOML, suitable for reloading.
    pub fn echo(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Parse, merge over defaults and validate a config text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let user: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    let mut base = match toml::Value::try_from(ExperimentConfig::default()) {
        Ok(toml::Value::Table(t)) => t,
        _ => unreachable!("default config serializes to a table"),
    };
    merge(&mut base, &user, "")?;
    let config: ExperimentConfig = toml::Value::Table(base)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn merge(base: &mut toml::Table, user: &toml::Table, prefix: &str) -> Result<()> {
    for (key, value) in user {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        let Some(slot) = base.get_mut(key) else {
            let nearest = base
                .keys()
                .max_by(|a, b| strsim::jaro_winkler(key, a).total_cmp(&strsim::jaro_winkler(key, b)));
            let hint = match nearest {
                Some(n) if prefix.is_empty() => format!("; nearest valid key is `{n}`"),
                Some(n) => format!("; nearest valid key is `{prefix}.{n}`"),
                None => String::new(),
            };
            return Err(Error::Config(format!("unknown key `{path}`{hint}")));
        };
        match (slot, value) {
            (toml::Value::Table(b), toml::Value::Table(u)) => merge(b, u, &path)?,
            (toml::Value::Table(_), _) => return Err(Error::Config(format!("`{path}` must be a table"))),
            (slot, v) => *slot = v.clone(),
        }
    }
    Ok(())
}

/// Named experiment presets.
pub const PRESETS: [&str; 4] = ["fig3d", "fig4a", "fig4b", "otto-demo"];

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let base = ExperimentConfig::default();
    let config = match name {
        // four-state populations after 100 ns pulses of increasing amplitude
        "fig3d" => ExperimentConfig {
            output_dir: "out/fig3d".into(),
            stages: vec![Stage::Evolve, Stage::Shots, Stage::Fit, Stage::Thermo],
            sweep: SweepConfig {
                amplitudes: vec![0.0, 0.3, 0.6, 0.9, 1.2],
                durations: vec![100.0],
            },
            ..base
        },
        // fitted temperature against amplitude
        "fig4a" => ExperimentConfig {
            output_dir: "out/fig4a".into(),
            stages: vec![Stage::Rates, Stage::Evolve, Stage::Shots, Stage::Fit, Stage::Thermo],
            sweep: SweepConfig {
                amplitudes: grid(0.0, 1.2, 0.1),
                durations: vec![100.0],
            },
            ..base
        },
        // fitted temperature against pulse length
        "fig4b" => ExperimentConfig {
            output_dir: "out/fig4b".into(),
            stages: vec![Stage::Evolve, Stage::Shots, Stage::Fit, Stage::Thermo],
            sweep: SweepConfig {
                amplitudes: vec![0.3, 0.6, 1.2],
                durations: grid(0.0, 200.0, 20.0),
            },
            ..base
        },
        "otto-demo" => ExperimentConfig {
            output_dir: "out/otto-demo".into(),
            stages: vec![Stage::Otto],
            ..base
        },
        _ => return None,
    };
    Some(config)
}
