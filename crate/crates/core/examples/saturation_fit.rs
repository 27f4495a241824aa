//! Fit T(t) = t0 + a (1 - exp(-t/tau)) to heating curves.

use qcr_thermo::thermometry::fit_saturation;

fn main() -> qcr_thermo::error::Result<()> {
    let times: Vec<f64> = (0..=10).map(|k| 20.0 * k as f64).collect();
    for (a, tau) in [(0.08, 185.0), (0.2, 80.0), (0.37, 109.0)] {
        let temps: Vec<f64> = times.iter().map(|t| 0.110 + a * (1.0 - (-t / tau).exp())).collect();
        let fit = fit_saturation(&times, &temps)?;
        println!(
            "true (0.110 K, {a} K, {tau} ns) -> fit ({:.4} K, {:.4} K, {:.2} ns), residual {:.1e}",
            fit.t0, fit.a, fit.tau, fit.residual
        );
    }
    Ok(())
}
