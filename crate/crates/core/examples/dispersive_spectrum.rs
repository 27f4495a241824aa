//! Dressed spectrum of transmon plus two resonators.

use qcr_thermo::system::{diagonalize, dispersive_shift, dispersive_shift_perturbative, SystemSpec};

fn main() -> qcr_thermo::error::Result<()> {
    let mut spec = SystemSpec::default();
    spec.reset_resonator.n_levels = 3;
    spec.readout_resonator.n_levels = 3;
    let spectrum = diagonalize(&spec)?;

    println!("lowest dressed states (n, k, l):");
    for (e, label) in spectrum.energies.iter().zip(&spectrum.labels).take(10) {
        println!("  {label:?}  {e:.6} GHz  (bare {:.6})", spec.bare_energy(label.0, label.1, label.2));
    }
    let chi = dispersive_shift(&spectrum).expect("labels present");
    println!(
        "\ndispersive pull χ = {:.4} MHz, perturbative {:.4} MHz",
        1e3 * chi,
        1e3 * dispersive_shift_perturbative(&spec)
    );
    Ok(())
}
