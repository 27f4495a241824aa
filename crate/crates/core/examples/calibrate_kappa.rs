//! Recalibrate the rate scale so the reference pulse reaches its target
//! temperature, then sweep the amplitude with it.
//!
//! cargo run --release --example calibrate_kappa [--purcell]

use qcr_thermo::calibration::{amplitude_sweep, calibrate_kappa, CalibrationTarget};
use qcr_thermo::config::grid;
use qcr_thermo::qcr::{CouplingSpec, JunctionSpec};
use qcr_thermo::system::SystemSpec;
use qcr_thermo::thermometry::ols_slope;

fn main() -> qcr_thermo::error::Result<()> {
    let purcell = std::env::args().any(|a| a == "--purcell");
    let system = SystemSpec::default();
    let junction = JunctionSpec::default();
    let target = CalibrationTarget::default();

    let cal = calibrate_kappa(&system, &junction, purcell, &target)?;
    println!(
        "kappa_eff = {:.6e} /ns after {} bisections: T = {:.4} K, p_g = {:.4}",
        cal.kappa_eff, cal.iterations, cal.temperature, cal.p_ground
    );

    let coupling = CouplingSpec {
        kappa_eff: cal.kappa_eff,
        purcell_filter: purcell,
    };
    let sweep = amplitude_sweep(&system, &junction, &coupling, target.t_start, target.duration, &grid(0.0, 1.2, 0.1))?;
    for (v, t) in &sweep {
        println!("  {v:4.1} mV  {:6.1} mK", 1e3 * t);
    }
    let above: Vec<(f64, f64)> = sweep.into_iter().filter(|p| p.0 > junction.gap_voltage()).collect();
    println!("slope above the gap: {:.3} K/mV", ols_slope(&above).unwrap_or(f64::NAN));
    Ok(())
}
