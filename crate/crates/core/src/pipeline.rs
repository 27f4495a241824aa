//! Staged, seeded experiment runs writing CSV tables.
//!
//! Stages run in the order given by the config. Every random draw comes from
//! the root seed through named sub-streams, so identical configs produce
//! byte-identical files.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

use crate::config::{ExperimentConfig, Stage};
use crate::dynamics::{evolve_with, BiasPulse, EvolveOptions, Model, Trajectory};
use crate::error::{Error, Result};
use crate::otto::{ghz_to_aj, run_cycle, OttoResult};
use crate::qcr::{effective_temperature, transition_rates, RateTable};
use crate::readout::{
    fit_gmm_labelled, fold_populations, synthesize_calibration, synthesize_shots, write_shots, PopulationEstimator,
    ReadoutModel, N_STATES,
};
use crate::rng::child_seed;
use crate::system::TransmonSpec;
use crate::thermometry::{fit_gibbs, fit_saturation, heating_slope, renormalize_first, MEASURED_STATES};

/// Shortest round-trip decimal, in exponent form outside [1e-5, 1e16);
/// empty for non-finite values.
pub fn fmt_f64(x: f64) -> String {
    if !x.is_finite() {
        String::new()
    } else if x == 0.0 || (1e-5..1e16).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn write_rates_csv<W: Write>(w: W, tables: &[RateTable]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["V_mV", "m", "gamma_down_per_ns", "gamma_up_per_ns", "T_eff_K"])?;
    for t in tables {
        for (m, p) in t.pairs.iter().enumerate() {
            out.write_record([
                fmt_f64(t.voltage),
                m.to_string(),
                fmt_f64(p.gamma_down),
                fmt_f64(p.gamma_up),
                fmt_opt(effective_temperature(p).ok()),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_trajectory_csv<W: Write>(w: W, traj: &Trajectory) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let levels = traj.populations.first().map_or(0, Vec::len);
    let mut header = vec!["t_ns".to_string()];
    header.extend((0..levels).map(|n| format!("p{n}")));
    header.push("T_fit_K".into());
    out.write_record(&header)?;
    for ((t, p), temp) in traj.times.iter().zip(&traj.populations).zip(&traj.temperatures) {
        let mut row = vec![fmt_f64(*t)];
        row.extend(p.iter().map(|&x| fmt_f64(x)));
        row.push(fmt_opt(*temp));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// One measured population vector with its bias and pulse length, if known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationRow {
    pub v_mv: Option<f64>,
    pub t_ns: Option<f64>,
    pub p: [f64; N_STATES],
}

pub fn write_populations_csv<W: Write>(w: W, rows: &[PopulationRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["V_mV", "t_ns", "p0", "p1", "p2", "p3"])?;
    for r in rows {
        let mut rec = vec![fmt_opt(r.v_mv), fmt_opt(r.t_ns)];
        rec.extend(r.p.iter().map(|&x| fmt_f64(x)));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct RawPopulationRow {
    #[serde(rename = "V_mV", default)]
    v_mv: Option<f64>,
    #[serde(default)]
    t_ns: Option<f64>,
    p0: f64,
    p1: f64,
    p2: f64,
    p3: f64,
}

/// Read `p0..p3` with optional `V_mV` and `t_ns` columns; rows are
/// renormalized to unit sum.
pub fn read_populations_csv<R: Read>(r: R) -> Result<Vec<PopulationRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        let raw: RawPopulationRow = rec?;
        let p = [raw.p0, raw.p1, raw.p2, raw.p3];
        let z: f64 = p.iter().sum();
        if p.iter().any(|&x| !(x >= 0.0)) || !(z > 0.0) {
            return Err(Error::Range(format!("row {} has invalid populations {p:?}", rows.len() + 1)));
        }
        rows.push(PopulationRow {
            v_mv: raw.v_mv,
            t_ns: raw.t_ns,
            p: p.map(|x| x / z),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermoRow {
    /// K
    pub temperature: Option<f64>,
    /// K
    pub uncertainty: Option<f64>,
    pub residual: Option<f64>,
}

/// Gibbs fits per row and a summary: heating slope across biases, saturation
/// fits across pulse lengths.
pub fn thermo_table(rows: &[PopulationRow], spec: &TransmonSpec, v_min: f64) -> (Vec<ThermoRow>, Vec<(String, String)>) {
    let fits: Vec<ThermoRow> = rows
        .iter()
        .map(|r| match fit_gibbs(&r.p, spec) {
            Ok(f) => ThermoRow {
                temperature: Some(f.temperature),
                uncertainty: Some(f.uncertainty),
                residual: Some(f.residual),
            },
            Err(_) => ThermoRow {
                temperature: None,
                uncertainty: None,
                residual: None,
            },
        })
        .collect();

    let mut summary = vec![
        ("rows".to_string(), rows.len().to_string()),
        (
            "thermal_rows".to_string(),
            fits.iter().filter(|f| f.temperature.is_some()).count().to_string(),
        ),
    ];

    // distinct biases in first-seen order
    let mut biases: Vec<f64> = Vec::new();
    for r in rows {
        if let Some(v) = r.v_mv {
            if !biases.contains(&v) {
                biases.push(v);
            }
        }
    }
    let series = |v: f64| -> Vec<(f64, f64)> {
        rows.iter()
            .zip(&fits)
            .filter(|(r, _)| r.v_mv == Some(v))
            .filter_map(|(r, f)| Some((r.t_ns?, f.temperature?)))
            .collect()
    };

    let one_per_bias = biases.iter().all(|&v| rows.iter().filter(|r| r.v_mv == Some(v)).count() == 1);
    if biases.len() >= 3 && one_per_bias {
        let mut points: Vec<(f64, f64)> = rows
            .iter()
            .zip(&fits)
            .filter_map(|(r, f)| Some((r.v_mv?, f.temperature?)))
            .collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Ok(slope) = heating_slope(&points, v_min) {
            summary.push(("slope_K_per_mV".into(), fmt_f64(slope)));
            let above: Vec<f64> = points.iter().filter(|p| p.0 > v_min).map(|p| p.1).collect();
            let monotone = above.windows(2).all(|w| w[1] > w[0]);
            summary.push(("monotone_above_gap".into(), monotone.to_string()));
        }
    }
    for &v in &biases {
        let s = series(v);
        if s.len() < 4 {
            continue;
        }
        let (times, temps): (Vec<f64>, Vec<f64>) = s.into_iter().unzip();
        let tag = fmt_f64(v);
        match fit_saturation(&times, &temps) {
            Ok(f) => {
                summary.push((format!("t0_K@{tag}mV"), fmt_f64(f.t0)));
                summary.push((format!("a_K@{tag}mV"), fmt_f64(f.a)));
                summary.push((format!("tau_ns@{tag}mV"), fmt_f64(f.tau)));
                summary.push((format!("degenerate@{tag}mV"), f.degenerate.to_string()));
            }
            Err(e) => summary.push((format!("saturation_error@{tag}mV"), e.to_string())),
        }
    }
    (fits, summary)
}

pub fn write_thermo_csv<W: Write>(w: W, fits: &[ThermoRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["T_mK", "T_err_mK", "residual"])?;
    for f in fits {
        out.write_record([
            fmt_opt(f.temperature.map(|t| 1e3 * t)),
            fmt_opt(f.uncertainty.map(|t| 1e3 * t)),
            fmt_opt(f.residual),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(w: W, summary: &[(String, String)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["quantity", "value"])?;
    for (k, v) in summary {
        out.write_record([k, v])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_otto_csv<W: Write>(w: W, result: &OttoResult) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["cycle", "Q_h", "Q_c", "W", "eta"])?;
    for c in &result.cycles {
        out.write_record([
            c.cycle.to_string(),
            fmt_f64(ghz_to_aj(c.q_hot)),
            fmt_f64(ghz_to_aj(c.q_cold)),
            fmt_f64(ghz_to_aj(c.work)),
            fmt_f64(c.eta),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn otto_summary(result: &OttoResult) -> Vec<(String, String)> {
    let max_residual = result.cycles.iter().map(|c| c.first_law_residual()).fold(0.0, f64::max);
    vec![
        ("eta_limit".into(), fmt_f64(result.eta_limit())),
        ("eta_c".into(), fmt_f64(result.eta_carnot)),
        ("eta_f".into(), fmt_f64(result.eta_frequency)),
        ("T_h_K".into(), fmt_f64(result.t_hot)),
        ("T_c_K".into(), fmt_f64(result.t_cold)),
        ("W_limit_aJ".into(), fmt_f64(ghz_to_aj(result.last().work))),
        (
            "limit_cycle_at".into(),
            result.limit_cycle_at.map(|c| c.to_string()).unwrap_or_default(),
        ),
        ("first_law_residual_max".into(), fmt_f64(max_residual)),
    ]
}

/// Rate tables over the configured bias grid.
pub fn rate_sweep(config: &ExperimentConfig) -> Result<Vec<RateTable>> {
    let system = config.system();
    config
        .rates
        .voltages()
        .par_iter()
        .map(|&v| transition_rates(&system, &config.junction, &config.coupling, v))
        .collect()
}

/// Final transmon populations of one sweep point.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub amplitude: f64,
    pub duration: f64,
    pub populations: Vec<f64>,
}

pub fn evolve_sweep(config: &ExperimentConfig) -> Result<Vec<SweepPoint>> {
    let system = config.system();
    let model = Model::new(&system, config.evolve.basis)?;
    let rho0 = model.initial_state(&config.evolve.initial)?;
    let options = EvolveOptions {
        basis: config.evolve.basis,
        sample_every: usize::MAX,
        fit_temperatures: false,
    };
    config
        .sweep
        .points()
        .par_iter()
        .map(|&(amplitude, duration)| {
            let pulse = BiasPulse {
                amplitude,
                duration,
                ..config.pulse
            };
            let traj = evolve_with(
                &rho0,
                &system,
                &config.junction,
                &config.coupling,
                &pulse,
                config.evolve.dt,
                duration,
                &options,
            )?;
            Ok(SweepPoint {
                amplitude,
                duration,
                populations: traj.final_populations().to_vec(),
            })
        })
        .collect()
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(fs::File::create(path)?)
}

fn stage_err(stage: Stage) -> impl FnOnce(Error) -> Error {
    move |e| Error::Stage {
        stage: stage.name().to_string(),
        source: Box::new(e),
    }
}

#[derive(Default)]
struct Carry {
    points: Option<Vec<SweepPoint>>,
    shots: Option<Vec<Vec<crate::readout::IQShot>>>,
    calibration: Option<(Vec<crate::readout::IQShot>, Vec<usize>)>,
    measured: Option<Vec<PopulationRow>>,
}

/// Run the configured stages, writing into `out_dir`. Returns the files
/// written, in order.
pub fn run_pipeline(config: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let echo = out_dir.join("config.echo.toml");
    create(&echo)?.write_all(config.echo()?.as_bytes())?;
    written.push(echo);

    let mut carry = Carry::default();
    for &stage in &config.stages {
        run_stage(stage, config, out_dir, &mut carry, &mut written).map_err(stage_err(stage))?;
    }
    Ok(written)
}

fn run_stage(stage: Stage, config: &ExperimentConfig, out: &Path, carry: &mut Carry, written: &mut Vec<PathBuf>) -> Result<()> {
    let system = config.system();
    let mut emit = |name: &str, f: &mut dyn FnMut(fs::File) -> Result<()>| -> Result<()> {
        let path = out.join(name);
        f(create(&path)?)?;
        written.push(path);
        Ok(())
    };
    match stage {
        Stage::Rates => {
            let tables = rate_sweep(config)?;
            emit("rates.csv", &mut |f| write_rates_csv(f, &tables))?;
        }
        Stage::Evolve => {
            let model = Model::new(&system, config.evolve.basis)?;
            let rho0 = model.initial_state(&config.evolve.initial)?;
            let options = EvolveOptions {
                basis: config.evolve.basis,
                sample_every: config.evolve.sample_every,
                fit_temperatures: true,
            };
            let traj = evolve_with(
                &rho0,
                &system,
                &config.junction,
                &config.coupling,
                &config.pulse,
                config.evolve.dt,
                config.evolve.t_end,
                &options,
            )?;
            emit("evolve.csv", &mut |f| write_trajectory_csv(f, &traj))?;

            let points = evolve_sweep(config)?;
            let levels = system.transmon.n_levels;
            emit("sweep_final.csv", &mut |f| {
                let mut out = csv::Writer::from_writer(f);
                let mut header = vec!["V_mV".to_string(), "t_ns".to_string()];
                header.extend((0..levels).map(|n| format!("p{n}")));
                header.push("T_fit_K".into());
                out.write_record(&header)?;
                for pt in &points {
                    let mut row = vec![fmt_f64(pt.amplitude), fmt_f64(pt.duration)];
                    row.extend(pt.populations.iter().map(|&x| fmt_f64(x)));
                    let t = fit_gibbs(&renormalize_first(&pt.populations, MEASURED_STATES), &system.transmon)
                        .ok()
                        .map(|g| g.temperature);
                    row.push(fmt_opt(t));
                    out.write_record(&row)?;
                }
                out.flush()?;
                Ok(())
            })?;
            carry.points = Some(points);
        }
        Stage::Shots => {
            let points = carry.points.as_ref().expect("validated stage order");
            let model = ReadoutModel::from_geometry(&config.readout.geometry())?;
            let (cal, labels) =
                synthesize_calibration(&model, config.readout.calibration_shots, child_seed(config.seed, "calibration", 0))?;
            emit("calibration_shots.csv", &mut |f| write_shots(f, &cal, Some(&labels)))?;
            let mut all = Vec::with_capacity(points.len());
            for (idx, pt) in points.iter().enumerate() {
                let p4 = fold_populations(&pt.populations, config.readout.folding)?;
                let shots = synthesize_shots(&p4, &model, config.readout.shots, child_seed(config.seed, "shots", idx as u64))?;
                emit(&format!("shots/point_{idx:03}.csv"), &mut |f| write_shots(f, &shots, None))?;
                all.push(shots);
            }
            carry.calibration = Some((cal, labels));
            carry.shots = Some(all);
        }
        Stage::Fit => {
            let (cal, labels) = carry.calibration.as_ref().expect("validated stage order");
            let gmm = fit_gmm_labelled(cal, labels, N_STATES)?;
            emit("model.txt", &mut |mut f| Ok(f.write_all(gmm.to_text().as_bytes())?))?;
            let estimator = PopulationEstimator::new(&gmm, config.readout.mc_samples, child_seed(config.seed, "correction", 0))?;
            let points = carry.points.as_ref().expect("validated stage order");
            let shots = carry.shots.as_ref().expect("validated stage order");
            let rows = points
                .iter()
                .zip(shots)
                .map(|(pt, s)| {
                    Ok(PopulationRow {
                        v_mv: Some(pt.amplitude),
                        t_ns: Some(pt.duration),
                        p: estimator.estimate(s)?.p,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            emit("populations.csv", &mut |f| write_populations_csv(f, &rows))?;
            carry.measured = Some(rows);
        }
        Stage::Thermo => {
            let rows = match &carry.measured {
                Some(rows) => rows.clone(),
                None => carry
                    .points
                    .as_ref()
                    .expect("validated stage order")
                    .iter()
                    .map(|pt| {
                        Ok(PopulationRow {
                            v_mv: Some(pt.amplitude),
                            t_ns: Some(pt.duration),
                            p: fold_populations(&pt.populations, config.readout.folding)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            };
            let (fits, summary) = thermo_table(&rows, &system.transmon, config.junction.gap_voltage());
            emit("thermo.csv", &mut |f| write_thermo_csv(f, &fits))?;
            emit("thermo_summary.csv", &mut |f| write_summary_csv(f, &summary))?;
        }
        Stage::Otto => {
            let result = run_cycle(&config.otto, &system, &config.junction, &config.coupling)?;
            emit("otto.csv", &mut |f| write_otto_csv(f, &result))?;
            emit("otto_summary.csv", &mut |f| write_summary_csv(f, &otto_summary(&result)))?;
        }
    }
    Ok(())
}
