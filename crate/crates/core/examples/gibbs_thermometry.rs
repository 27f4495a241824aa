//! Gibbs populations at the idle and heated temperatures, and the inverse
//! fit on noisy populations.

use qcr_thermo::system::TransmonSpec;
use qcr_thermo::thermometry::{fit_gibbs, gibbs_four_state};

fn main() -> qcr_thermo::error::Result<()> {
    let spec = TransmonSpec::default();
    for t in [0.110, 0.150, 0.300, 0.476] {
        let p = gibbs_four_state(t, &spec);
        // deterministic ±1% multiplicative perturbation
        let noisy: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(k, x)| x * (1.0 + 0.01 * if k % 2 == 0 { 1.0 } else { -1.0 }))
            .collect();
        let z: f64 = noisy.iter().sum();
        let noisy: Vec<f64> = noisy.iter().map(|x| x / z).collect();
        let fit = fit_gibbs(&noisy, &spec)?;
        println!(
            "T = {:5.1} mK  p = [{:.3}, {:.3}, {:.3}, {:.4}]  refit {:5.1} ± {:.1} mK",
            1e3 * t,
            p[0],
            p[1],
            p[2],
            p[3],
            1e3 * fit.temperature,
            1e3 * fit.uncertainty
        );
    }
    Ok(())
}
