//! Synthetic single-shot readout: calibrate the IQ clouds, then recover a
//! population vector from 10000 shots.
//!
//! cargo run --release --example readout_roundtrip [seed]

use qcr_thermo::readout::{
    fit_gmm_labelled, synthesize_calibration, synthesize_shots, PopulationEstimator, ReadoutGeometry, ReadoutModel,
    DEFAULT_MC_SAMPLES, N_STATES, STATE_NAMES,
};
use qcr_thermo::rng::child_seed;

fn main() -> qcr_thermo::error::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(7, |s| s.parse().expect("integer seed"));
    let truth = [0.83, 0.14, 0.025, 0.005];

    let model = ReadoutModel::from_geometry(&ReadoutGeometry::default())?;
    let (cal, labels) = synthesize_calibration(&model, 10_000, child_seed(seed, "calibration", 0))?;
    let gmm = fit_gmm_labelled(&cal, &labels, N_STATES)?;
    let estimator = PopulationEstimator::new(&gmm, DEFAULT_MC_SAMPLES, child_seed(seed, "correction", 0))?;
    println!("overlap matrix (condition {:.2}):\n{:.4}", estimator.condition, estimator.correction);

    let shots = synthesize_shots(&truth, &model, 10_000, child_seed(seed, "shots", 0))?;
    let est = estimator.estimate(&shots)?;
    println!("state  truth   counted  corrected");
    for k in 0..N_STATES {
        println!(
            "  {}    {:.4}  {:.4}   {:.4}",
            STATE_NAMES[k], truth[k], est.uncorrected[k], est.p[k]
        );
    }
    Ok(())
}
