//! Simulate the NIS current-voltage curve and read the gap and Dynes
//! parameter back off it.

use qcr_thermo::qcr::{extract_dynes, junction_current, JunctionSpec};

fn main() -> qcr_thermo::error::Result<()> {
    let junction = JunctionSpec::default();
    let iv: Vec<(f64, f64)> = (-600..=600)
        .map(|k| {
            let v = 1e-3 * k as f64;
            junction_current(v, &junction).map(|i| (v, i))
        })
        .collect::<Result<_, _>>()?;
    for &(v, i) in iv.iter().step_by(100) {
        println!("V = {v:6.3} mV  I = {i:10.5} nA");
    }
    let (delta, gamma_d) = extract_dynes(&iv)?;
    println!(
        "\nextracted Δ = {delta:.4} meV (true {}), γ_D = {gamma_d:.2e} (true {:.2e})",
        junction.delta, junction.gamma_d
    );
    Ok(())
}
