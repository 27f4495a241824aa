//! Four-stroke Otto engine with QCR baths on a flux-tunable transmon.
//!
//! cargo run --release --example otto_engine [v_hot_mV] [v_cold_mV]

use qcr_thermo::otto::{ghz_to_aj, run_cycle, OttoSpec};
use qcr_thermo::qcr::{CouplingSpec, JunctionSpec};
use qcr_thermo::system::SystemSpec;

fn main() -> qcr_thermo::error::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<f64>().expect("numeric argument"));
    let spec = OttoSpec {
        v_hot: args.next().unwrap_or(1.2),
        v_cold: args.next().unwrap_or(0.2),
        ..OttoSpec::default()
    };
    let result = run_cycle(&spec, &SystemSpec::default(), &JunctionSpec::default(), &CouplingSpec::default())?;

    println!("cycle      Q_h/aJ      Q_c/aJ        W/aJ     eta");
    for c in &result.cycles {
        println!(
            "{:5} {:11.3e} {:11.3e} {:11.3e} {:7.4}",
            c.cycle,
            ghz_to_aj(c.q_hot),
            ghz_to_aj(c.q_cold),
            ghz_to_aj(c.work),
            c.eta
        );
    }
    println!(
        "\nT_h = {:.3} K, T_c = {:.1} mK\neta = {:.5}, eta_f = {:.5}, eta_c = {:.5}, limit cycle at {:?}",
        result.t_hot,
        1e3 * result.t_cold,
        result.eta_limit(),
        result.eta_frequency,
        result.eta_carnot,
        result.limit_cycle_at
    );
    Ok(())
}
