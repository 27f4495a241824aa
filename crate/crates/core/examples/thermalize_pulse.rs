//! Heat the transmon with a 100 ns, 1.2 mV pulse and check how close the
//! result is to a Gibbs state.
//!
//! cargo run --example thermalize_pulse [amplitude_mV] [duration_ns]

use qcr_thermo::dynamics::{evolve_with, BiasPulse, DensityMatrix, EvolveOptions, Model, InitialState};
use qcr_thermo::qcr::{CouplingSpec, JunctionSpec};
use qcr_thermo::system::{transmon_energies, SystemSpec};
use qcr_thermo::thermometry::fit_gibbs;

fn main() -> qcr_thermo::error::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<f64>().expect("numeric argument"));
    let amplitude = args.next().unwrap_or(1.2);
    let duration = args.next().unwrap_or(100.0);

    let system = SystemSpec::default();
    let model = Model::transmon(&system)?;
    let rho0 = model.initial_state(&InitialState::Gibbs(0.11))?;
    let pulse = BiasPulse::square(amplitude, duration);
    let options = EvolveOptions {
        sample_every: 100,
        ..EvolveOptions::default()
    };
    let traj = evolve_with(
        &rho0,
        &system,
        &JunctionSpec::default(),
        &CouplingSpec::default(),
        &pulse,
        0.1,
        duration,
        &options,
    )?;

    for ((t, p), temp) in traj.times.iter().zip(&traj.populations).zip(&traj.temperatures) {
        let temp = temp.map(|x| format!("{:.1} mK", 1e3 * x)).unwrap_or_default();
        println!("t = {t:6.1} ns  p_g = {:.4}  p_e = {:.4}  {temp}", p[0], p[1]);
    }

    let four = traj.final_four_state();
    let fit = fit_gibbs(&four, &system.transmon)?;
    let gibbs = DensityMatrix::gibbs(&transmon_energies(&system.transmon), fit.temperature)?;
    println!(
        "\nfinal: T = {:.1} ± {:.1} mK, four-state p_g = {:.3}, fidelity to Gibbs = {:.5}",
        1e3 * fit.temperature,
        1e3 * fit.uncertainty,
        four[0],
        traj.final_state.fidelity(&gibbs)
    );
    Ok(())
}
