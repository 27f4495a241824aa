//! Thermometry: Gibbs populations, temperature fits of measured four-state
//! populations, saturation curves `T(t) = T0 + A (1 - exp(-t/τ))` and heating
//! slopes.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::system::{transmon_energies, TransmonSpec};
use crate::units::boltzmann_exponent;

/// Number of transmon levels in the Gibbs model used for fitting.
pub const GIBBS_TRUNCATION: usize = 6;
/// Number of measured (and renormalized) states.
pub const MEASURED_STATES: usize = 4;

/// Temperature search interval in K.
const T_MIN: f64 = 1e-3;
const T_MAX: f64 = 5.0;

/// Gibbs populations over the first `truncation` levels of `spec` at `t` kelvin.
/// As `t -> 0` this tends to the ground state.
pub fn gibbs_populations(t: f64, spec: &TransmonSpec, truncation: usize) -> Vec<f64> {
    let ladder = TransmonSpec {
        n_levels: truncation,
        ..*spec
    };
    boltzmann(&transmon_energies(&ladder), t)
}

/// Normalized Boltzmann weights for arbitrary energies (GHz).
pub fn boltzmann(energies: &[f64], t: f64) -> Vec<f64> {
    if energies.is_empty() {
        return Vec::new();
    }
    let e0 = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies
        .iter()
        .map(|&e| {
            if t > 0.0 {
                (-boltzmann_exponent(e - e0, t)).exp()
            } else if e == e0 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Keep the first `keep` entries and renormalize them to unit sum.
pub fn renormalize_first(p: &[f64], keep: usize) -> Vec<f64> {
    let head = &p[..keep.min(p.len())];
    let z: f64 = head.iter().sum();
    head.iter().map(|x| x / z).collect()
}

/// Gibbs populations truncated at six levels, then renormalized over g, e, f, h.
pub fn gibbs_four_state(t: f64, spec: &TransmonSpec) -> Vec<f64> {
    renormalize_first(&gibbs_populations(t, spec, GIBBS_TRUNCATION), MEASURED_STATES)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsFit {
    /// Best-fit temperature in K.
    pub temperature: f64,
    /// Sum of squared population residuals.
    pub residual: f64,
    /// One-sigma temperature uncertainty from the residual curvature, in K.
    pub uncertainty: f64,
    pub truncation: usize,
}

/// True when the populations are non-increasing with level index.
pub fn is_thermal_fittable(p: &[f64]) -> bool {
    p.windows(2).all(|w| w[1] <= w[0])
}

/// Least-squares temperature of the closest four-state-normalized Gibbs state.
pub fn fit_gibbs(p_measured: &[f64], spec: &TransmonSpec) -> Result<GibbsFit> {
    if p_measured.len() != MEASURED_STATES {
        return Err(Error::Range(format!(
            "expected {MEASURED_STATES} populations, got {}",
            p_measured.len()
        )));
    }
    if p_measured.iter().any(|&x| !(x >= 0.0)) || (p_measured.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
        return Err(Error::Range(format!(
            "populations must be non-negative and normalized: {p_measured:?}"
        )));
    }
    if !is_thermal_fittable(p_measured) {
        return Err(Error::NonThermalPopulations(p_measured.to_vec()));
    }

    let residual = |t: f64| -> f64 {
        gibbs_four_state(t, spec)
            .iter()
            .zip(p_measured)
            .map(|(m, d)| (m - d) * (m - d))
            .sum()
    };

    // coarse log-spaced scan, then Brent inside the bracketing cell
    const GRID: usize = 240;
    let ratio = (T_MAX / T_MIN).powf(1.0 / (GRID - 1) as f64);
    let grid: Vec<f64> = (0..GRID).map(|i| T_MIN * ratio.powi(i as i32)).collect();
    let best = (0..GRID)
        .min_by(|&a, &b| residual(grid[a]).total_cmp(&residual(grid[b])))
        .expect("non-empty grid");
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(GRID - 1)];
    let (temperature, r_min) = brent_minimize(&residual, lo, hi, 1e-12, 200);

    let h = 1e-3 * temperature;
    let curvature = (residual(temperature + h) - 2.0 * r_min + residual(temperature - h)) / (h * h);
    let dof = (MEASURED_STATES - 1) as f64;
    let uncertainty = if curvature > 0.0 {
        ((r_min / dof) / (0.5 * curvature)).sqrt()
    } else {
        f64::INFINITY
    };

    Ok(GibbsFit {
        temperature,
        residual: r_min,
        uncertainty,
        truncation: GIBBS_TRUNCATION,
    })
}

/// Brent's golden-section/parabolic minimizer on `[a, b]`. Returns `(x, f(x))`.
pub fn brent_minimize<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64, max_iter: usize) -> (f64, f64) {
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = rel_tol * x.abs() + 1e-300;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturationFit {
    /// Initial temperature in K.
    pub t0: f64,
    /// Saturation amplitude in K.
    pub a: f64,
    /// Time constant in ns.
    pub tau: f64,
    /// Sum of squared residuals in K².
    pub residual: f64,
    /// Set when the amplitude vanishes and `tau` carries no information.
    pub degenerate: bool,
}

/// Starting time constants (ns) for the multi-start fit.
pub const SATURATION_STARTS: [f64; 5] = [25.0, 50.0, 100.0, 200.0, 400.0];

fn saturation_model(t: f64, p: &Vector3<f64>) -> f64 {
    // p = (t0, a, ln tau)
    p[0] + p[1] * (1.0 - (-t / p[2].exp()).exp())
}

fn linear_part(times: &[f64], temps: &[f64], tau: f64) -> (f64, f64) {
    // least squares for (t0, a) with tau fixed
    let n = times.len() as f64;
    let xs: Vec<f64> = times.iter().map(|t| 1.0 - (-t / tau).exp()).collect();
    let sx: f64 = xs.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sy: f64 = temps.iter().sum();
    let sxy: f64 = xs.iter().zip(temps).map(|(x, y)| x * y).sum();
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return (sy / n, 0.0);
    }
    let a = (n * sxy - sx * sy) / det;
    let t0 = (sy - a * sx) / n;
    (t0, a)
}

fn levenberg_marquardt(times: &[f64], temps: &[f64], start: Vector3<f64>) -> Option<(Vector3<f64>, f64)> {
    let cost = |p: &Vector3<f64>| -> f64 {
        times
            .iter()
            .zip(temps)
            .map(|(&t, &y)| (saturation_model(t, p) - y).powi(2))
            .sum()
    };
    let mut p = start;
    let mut c = cost(&p);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let tau = p[2].exp();
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (&t, &y) in times.iter().zip(temps) {
            let ex = (-t / tau).exp();
            let r = saturation_model(t, &p) - y;
            // d/d(ln tau) of a(1 - exp(-t/tau)) = -a exp(-t/tau) t / tau
            let j = Vector3::new(1.0, 1.0 - ex, -p[1] * ex * t / tau);
            jtj += j * j.transpose();
            jtr += j * r;
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = jtj;
            for i in 0..3 {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-30);
            }
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let ct = cost(&trial);
            if ct.is_finite() && ct <= c {
                let done = (c - ct) <= 1e-15 * c.max(1e-300) || step.norm() < 1e-13 * (1.0 + p.norm());
                p = trial;
                c = ct;
                lambda = (lambda * 0.3).max(1e-15);
                improved = true;
                if done {
                    return Some((p, c));
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // no downhill step at any damping: stationary point
            return Some((p, c));
        }
        if c == 0.0 {
            return Some((p, c));
        }
    }
    c.is_finite().then_some((p, c))
}

/// Fit `T(t) = t0 + a (1 - exp(-t/tau))` with multi-start over [`SATURATION_STARTS`].
pub fn fit_saturation(times: &[f64], temps: &[f64]) -> Result<SaturationFit> {
    if times.len() != temps.len() {
        return Err(Error::Range("times and temperatures differ in length".into()));
    }
    if times.len() < 4 {
        return Err(Error::Range(format!("need at least 4 points, got {}", times.len())));
    }
    if times[0] < 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Range("times must be non-negative and increasing".into()));
    }

    let scale = temps.iter().map(|t| t.abs()).fold(0.0, f64::max).max(1e-300);
    let mean = temps.iter().sum::<f64>() / temps.len() as f64;
    let spread = temps.iter().map(|t| (t - mean).abs()).fold(0.0, f64::max);
    if spread <= 1e-9 * scale {
        return Ok(SaturationFit {
            t0: mean,
            a: 0.0,
            tau: SATURATION_STARTS[2],
            residual: temps.iter().map(|t| (t - mean).powi(2)).sum(),
            degenerate: true,
        });
    }

    let mut best: Option<(Vector3<f64>, f64)> = None;
    for &tau0 in &SATURATION_STARTS {
        let (t0, a) = linear_part(times, temps, tau0);
        if let Some((p, c)) = levenberg_marquardt(times, temps, Vector3::new(t0, a, tau0.ln())) {
            if best.as_ref().is_none_or(|b| c < b.1) {
                best = Some((p, c));
            }
        }
    }
    let Some((p, c)) = best else {
        return Err(Error::FitNonConvergence {
            message: "no start converged".into(),
            best: vec![mean, 0.0, SATURATION_STARTS[2]],
        });
    };
    let tau = p[2].exp();
    if !tau.is_finite() || !p[0].is_finite() || !p[1].is_finite() {
        return Err(Error::FitNonConvergence {
            message: "parameters diverged".into(),
            best: vec![p[0], p[1], tau],
        });
    }
    Ok(SaturationFit {
        t0: p[0],
        a: p[1],
        tau,
        residual: c,
        degenerate: p[1].abs() <= 1e-9 * scale,
    })
}

/// Ordinary least-squares slope of `y` against `x`; `None` with fewer than two
/// distinct abscissae.
pub fn ols_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Heating rate dT/dV (K/mV) from points with bias above `v_min`.
pub fn heating_slope(points: &[(f64, f64)], v_min: f64) -> Result<f64> {
    let above: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.0 > v_min).collect();
    if above.len() < 3 {
        return Err(Error::Range(format!(
            "need at least 3 points above {v_min} mV, got {}",
            above.len()
        )));
    }
    ols_slope(&above).ok_or_else(|| Error::Range("degenerate bias values".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn transmon() -> TransmonSpec {
        TransmonSpec::default()
    }

    #[test]
    fn zero_temperature_is_ground_state() {
        let p = gibbs_populations(1e-6, &transmon(), 6);
        assert_eq!(p, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let p0 = gibbs_populations(0.0, &transmon(), 6);
        assert_eq!(p0[0], 1.0);
    }

    #[test]
    fn idle_ground_population() {
        let p = gibbs_four_state(0.110, &transmon());
        assert!((p[0] - 0.83).abs() < 0.01, "{p:?}");
    }

    #[test]
    fn exact_round_trip() {
        let p = gibbs_four_state(0.2, &transmon());
        let fit = fit_gibbs(&p, &transmon()).unwrap();
        assert!((fit.temperature - 0.2).abs() < 1e-4);
        assert!(fit.residual < 1e-20);
        assert!(fit.uncertainty < 1e-6);
    }

    #[test]
    fn inverted_populations_flagged() {
        let p = [0.1, 0.2, 0.3, 0.4];
        assert!(matches!(
            fit_gibbs(&p, &transmon()),
            Err(Error::NonThermalPopulations(_))
        ));
    }

    #[test]
    fn linear_slope() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| {
            let v = 0.3 + 0.1 * i as f64;
            (v, 0.1 + 0.36 * v)
        }).collect();
        assert!((heating_slope(&pts, 0.215).unwrap() - 0.36).abs() < 1e-12);
        assert!(heating_slope(&pts[..2], 0.215).is_err());
    }

    #[test]
    fn constant_saturation_is_degenerate() {
        let t: Vec<f64> = (0..8).map(|i| 10.0 * i as f64).collect();
        let y = vec![0.2; 8];
        let fit = fit_saturation(&t, &y).unwrap();
        assert!(fit.degenerate);
        assert!((fit.t0 - 0.2).abs() < 1e-12);
        assert_eq!(fit.a, 0.0);
    }

    #[test]
    fn saturation_input_validation() {
        assert!(fit_saturation(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(fit_saturation(&[0.0, 2.0, 1.0, 3.0], &[1.0; 4]).is_err());
    }

    #[test]
    fn brent_finds_parabola_minimum() {
        let (x, fx) = brent_minimize(&|x: f64| (x - 0.7).powi(2) + 1.0, 0.0, 2.0, 1e-12, 200);
        assert!((x - 0.7).abs() < 1e-8);
        assert!((fx - 1.0).abs() < 1e-15);
    }
}
