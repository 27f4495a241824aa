use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qcr_thermo::config::{load_config, preset, ExperimentConfig, PRESETS};
use qcr_thermo::dynamics::{evolve_with, BiasPulse, EvolveOptions, InitialState, Model};
use qcr_thermo::error::{Error, Result};
use qcr_thermo::otto::run_cycle;
use qcr_thermo::pipeline::{
    otto_summary, rate_sweep, read_populations_csv, thermo_table, write_otto_csv, write_populations_csv,
    write_rates_csv, write_summary_csv, write_thermo_csv, write_trajectory_csv, PopulationRow,
};
use qcr_thermo::readout::{
    fit_gmm, fit_gmm_labelled, read_shots, synthesize_calibration, synthesize_shots, write_shots, GmmInit,
    PopulationEstimator, ReadoutModel, N_STATES,
};
use qcr_thermo::rng::child_seed;

#[derive(Parser)]
#[command(name = "qcr-thermo", version, about = "Transmon thermal-state generation with a QCR")]
struct Cli {
    /// TOML config; defaults are used for anything it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Output {
    /// Write CSV here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Transition rates and effective temperature over a bias grid.
    Rates {
        #[arg(long)]
        v_min: Option<f64>,
        #[arg(long)]
        v_max: Option<f64>,
        #[arg(long)]
        v_step: Option<f64>,
        #[command(flatten)]
        output: Output,
    },
    /// Populations under a QCR pulse.
    Evolve {
        /// mV
        #[arg(long)]
        amplitude: Option<f64>,
        /// ns
        #[arg(long)]
        duration: Option<f64>,
        /// ns
        #[arg(long)]
        dt: Option<f64>,
        /// Trajectory length in ns; defaults to the pulse duration.
        #[arg(long)]
        t_end: Option<f64>,
        /// gibbs:<T_K> or level:<n>
        #[arg(long)]
        initial: Option<InitialState>,
        #[arg(long)]
        sample_every: Option<usize>,
        #[command(flatten)]
        output: Output,
    },
    /// Synthetic single-shot IQ data.
    Shots {
        /// Four populations g,e,f,h.
        #[arg(long, value_delimiter = ',')]
        populations: Option<Vec<f64>>,
        #[arg(long)]
        n: Option<usize>,
        /// Labelled calibration set with this many shots per state instead.
        #[arg(long, conflicts_with = "populations")]
        calibration: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        output: Output,
    },
    /// Fit the readout model on calibration shots and estimate populations.
    Fit {
        /// Calibration shots; labelled files get a per-label fit, others EM.
        calibration: PathBuf,
        /// Measurement shot files, one population row each.
        shots: Vec<PathBuf>,
        /// Model file.
        #[arg(long, default_value = "model.txt")]
        model: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        output: Output,
    },
    /// Gibbs temperatures for a populations CSV.
    Thermo {
        populations: PathBuf,
        /// Summary CSV; printed to stderr if omitted.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Quantum Otto engine cycles.
    Otto {
        #[arg(long)]
        omega_max: Option<f64>,
        #[arg(long)]
        omega_min: Option<f64>,
        #[arg(long)]
        v_hot: Option<f64>,
        #[arg(long)]
        v_cold: Option<f64>,
        #[arg(long)]
        t_isochore: Option<f64>,
        #[arg(long)]
        n_cycles: Option<usize>,
        #[arg(long)]
        levels: Option<usize>,
        /// Summary CSV; printed to stderr if omitted.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Run a staged pipeline from a preset name or a config file.
    Pipeline {
        /// One of fig3d, fig4a, fig4b, otto-demo, or a TOML path.
        target: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn sink(output: &Output) -> Result<Box<dyn Write>> {
    Ok(match &output.out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            Box::new(io::BufWriter::new(fs::File::create(p)?))
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn summary_sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(fs::File::create(p)?),
        None => Box::new(io::stderr()),
    })
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    match cli.command {
        Command::Rates {
            v_min,
            v_max,
            v_step,
            output,
        } => {
            config.rates.v_min = v_min.unwrap_or(config.rates.v_min);
            config.rates.v_max = v_max.unwrap_or(config.rates.v_max);
            config.rates.v_step = v_step.unwrap_or(config.rates.v_step);
            config.validate()?;
            write_rates_csv(sink(&output)?, &rate_sweep(&config)?)
        }
        Command::Evolve {
            amplitude,
            duration,
            dt,
            t_end,
            initial,
            sample_every,
            output,
        } => {
            let pulse = BiasPulse {
                amplitude: amplitude.unwrap_or(config.pulse.amplitude),
                duration: duration.unwrap_or(config.pulse.duration),
                ..config.pulse
            };
            config.pulse = pulse;
            config.evolve.dt = dt.unwrap_or(config.evolve.dt);
            config.evolve.initial = initial.unwrap_or(config.evolve.initial);
            config.evolve.sample_every = sample_every.unwrap_or(config.evolve.sample_every);
            config.evolve.t_end = t_end.unwrap_or(pulse.duration);
            config.validate()?;
            let system = config.system();
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
                &pulse,
                config.evolve.dt,
                config.evolve.t_end,
                &options,
            )?;
            write_trajectory_csv(sink(&output)?, &traj)
        }
        Command::Shots {
            populations,
            n,
            calibration,
            seed,
            output,
        } => {
            config.validate()?;
            let seed = seed.unwrap_or(config.seed);
            let model = ReadoutModel::from_geometry(&config.readout.geometry())?;
            if let Some(per_state) = calibration {
                let (shots, labels) = synthesize_calibration(&model, per_state, child_seed(seed, "calibration", 0))?;
                return write_shots(sink(&output)?, &shots, Some(&labels));
            }
            let p = populations.ok_or_else(|| Error::Config("shots needs --populations or --calibration".into()))?;
            if p.len() != 4 {
                return Err(Error::Config(format!("--populations needs 4 values, got {}", p.len())));
            }
            let shots = synthesize_shots(
                &[p[0], p[1], p[2], p[3]],
                &model,
                n.unwrap_or(config.readout.shots),
                child_seed(seed, "shots", 0),
            )?;
            write_shots(sink(&output)?, &shots, None)
        }
        Command::Fit {
            calibration,
            shots,
            model,
            seed,
            output,
        } => {
            config.validate()?;
            let seed = seed.unwrap_or(config.seed);
            let (cal, labels) = read_shots(fs::File::open(&calibration)?)?;
            let gmm = match labels {
                Some(labels) => fit_gmm_labelled(&cal, &labels, N_STATES)?,
                None => fit_gmm(&cal, N_STATES, &GmmInit::KMeansPlusPlus, child_seed(seed, "gmm", 0))?,
            };
            fs::write(&model, gmm.to_text())?;
            let estimator = PopulationEstimator::new(&gmm, config.readout.mc_samples, child_seed(seed, "correction", 0))?;
            let rows = shots
                .iter()
                .map(|path| {
                    let (s, _) = read_shots(fs::File::open(path)?)?;
                    Ok(PopulationRow {
                        v_mv: None,
                        t_ns: None,
                        p: estimator.estimate(&s)?.p,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            write_populations_csv(sink(&output)?, &rows)
        }
        Command::Thermo {
            populations,
            summary,
            output,
        } => {
            config.validate()?;
            let rows = read_populations_csv(fs::File::open(&populations)?)?;
            let (fits, table) = thermo_table(&rows, &config.transmon, config.junction.gap_voltage());
            write_thermo_csv(sink(&output)?, &fits)?;
            write_summary_csv(summary_sink(&summary)?, &table)
        }
        Command::Otto {
            omega_max,
            omega_min,
            v_hot,
            v_cold,
            t_isochore,
            n_cycles,
            levels,
            summary,
            output,
        } => {
            let o = &mut config.otto;
            o.omega_max = omega_max.unwrap_or(o.omega_max);
            o.omega_min = omega_min.unwrap_or(o.omega_min);
            o.v_hot = v_hot.unwrap_or(o.v_hot);
            o.v_cold = v_cold.unwrap_or(o.v_cold);
            o.t_isochore = t_isochore.unwrap_or(o.t_isochore);
            o.n_cycles = n_cycles.unwrap_or(o.n_cycles);
            o.levels = levels.unwrap_or(o.levels);
            config.validate()?;
            let result = run_cycle(&config.otto, &config.system(), &config.junction, &config.coupling)?;
            write_otto_csv(sink(&output)?, &result)?;
            write_summary_csv(summary_sink(&summary)?, &otto_summary(&result))
        }
        Command::Pipeline { target, seed, out_dir } => {
            let mut config = match preset(&target) {
                Some(c) => c,
                None if Path::new(&target).exists() => load_config(Path::new(&target))?,
                None => {
                    return Err(Error::Config(format!(
                        "`{target}` is neither a preset ({}) nor a readable file",
                        PRESETS.join(", ")
                    )))
                }
            };
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let dir = out_dir.unwrap_or_else(|| PathBuf::from(&config.output_dir));
            for path in qcr_thermo::pipeline::run_pipeline(&config, &dir)? {
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
