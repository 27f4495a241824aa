//! Transition rates and effective temperature across the bias range.
//!
//! cargo run --example rates_sweep

use qcr_thermo::config::grid;
use qcr_thermo::qcr::{effective_temperature, transition_rates, CouplingSpec, JunctionSpec};
use qcr_thermo::system::SystemSpec;

fn main() -> qcr_thermo::error::Result<()> {
    let system = SystemSpec::default();
    let junction = JunctionSpec::default();
    let coupling = CouplingSpec::default();

    println!("{:>6} {:>12} {:>12} {:>9}", "V/mV", "γ↓ (1/µs)", "γ↑ (1/µs)", "T_eff/mK");
    for v in grid(0.0, 1.2, 0.05) {
        let table = transition_rates(&system, &junction, &coupling, v)?;
        let ge = &table.pairs[0];
        let t = effective_temperature(ge).map(|t| format!("{:9.1}", 1e3 * t)).unwrap_or_else(|_| "  --".into());
        println!("{v:6.2} {:12.4} {:12.4} {t}", 1e3 * ge.gamma_down, 1e3 * ge.gamma_up);
    }
    Ok(())
}
