//! Dispersive single-shot readout: synthetic IQ shots, Gaussian-mixture
//! fitting and population estimates from 1σ-ellipse counting with an overlap
//! correction.
//!
//! Only g, e, f and h are resolved. The h component stands for "h and above"
//! when higher levels are folded into it (see [`Folding`]).

use std::io::{Read, Write};

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{stream, CHUNK};

pub const N_STATES: usize = 4;
pub const STATE_NAMES: [&str; N_STATES] = ["g", "e", "f", "h"];

/// Monte Carlo samples per component for the correction matrix.
pub const DEFAULT_MC_SAMPLES: usize = 200_000;

const EM_MAX_ITER: usize = 500;
const EM_REL_TOL: f64 = 1e-8;
const COLLAPSE_FLOOR: f64 = 1e-12;
const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IQShot {
    pub i: f64,
    pub q: f64,
}

impl IQShot {
    fn v(&self) -> Vector2<f64> {
        Vector2::new(self.i, self.q)
    }
}

/// How populations above h enter a four-state readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Folding {
    /// Drop levels above h and renormalize.
    #[default]
    Truncate,
    /// Count levels above h as h.
    LumpIntoH,
}

/// Reduce a population vector of any length ≥ 4 to g, e, f, h.
pub fn fold_populations(p: &[f64], folding: Folding) -> Result<[f64; N_STATES]> {
    if p.len() < N_STATES {
        return Err(Error::Range(format!("need at least {N_STATES} populations, got {}", p.len())));
    }
    let mut out = [p[0], p[1], p[2], p[3]];
    if folding == Folding::LumpIntoH {
        out[3] += p[N_STATES..].iter().sum::<f64>();
    }
    let z: f64 = out.iter().sum();
    if !(z > 0.0) {
        return Err(Error::Range("populations of g..h sum to zero".into()));
    }
    Ok(out.map(|x| x / z))
}

/// Synthetic IQ-plane layout: four means on a circle at 90° steps, isotropic
/// clouds, the h cloud broader than the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutGeometry {
    /// Cloud standard deviation (arbitrary units).
    pub sigma: f64,
    /// Distance between adjacent means, in units of `sigma`.
    pub spacing: f64,
    /// Variance multiplier of the h cloud.
    pub h_variance_scale: f64,
}

impl Default for ReadoutGeometry {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            spacing: 3.0,
            h_variance_scale: 2.0,
        }
    }
}

impl ReadoutGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid("readout.sigma", "must be > 0"));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(invalid("readout.spacing", "must be > 0"));
        }
        if !(self.h_variance_scale > 0.0 && self.h_variance_scale.is_finite()) {
            return Err(invalid("readout.h_variance_scale", "must be > 0"));
        }
        Ok(())
    }
}

/// Per-state Gaussian clouds in the IQ plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutModel {
    pub means: [Vector2<f64>; N_STATES],
    pub covariances: [Matrix2<f64>; N_STATES],
}

impl ReadoutModel {
    pub fn new(means: [Vector2<f64>; N_STATES], covariances: [Matrix2<f64>; N_STATES]) -> Result<Self> {
        for (k, c) in covariances.iter().enumerate() {
            check_spd(c, STATE_NAMES[k])?;
        }
        Ok(Self { means, covariances })
    }

    pub fn from_geometry(geometry: &ReadoutGeometry) -> Result<Self> {
        geometry.validate()?;
        let radius = geometry.spacing * geometry.sigma / std::f64::consts::SQRT_2;
        let means = std::array::from_fn(|k| {
            let phi = k as f64 * std::f64::consts::FRAC_PI_2;
            Vector2::new(radius * phi.cos(), radius * phi.sin())
        });
        let var = geometry.sigma * geometry.sigma;
        let mut covariances = [Matrix2::identity() * var; N_STATES];
        covariances[3] *= geometry.h_variance_scale;
        Self::new(means, covariances)
    }
}

fn check_spd(c: &Matrix2<f64>, what: &str) -> Result<()> {
    if (c[(0, 1)] - c[(1, 0)]).abs() > 1e-12 * c.norm() || c.cholesky().is_none() {
        return Err(Error::NotPositiveDefinite(format!("covariance of {what}: {c:?}")));
    }
    Ok(())
}

fn gaussian_sample<R: Rng>(rng: &mut R, mean: &Vector2<f64>, chol: &Matrix2<f64>) -> Vector2<f64> {
    let z = Vector2::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal));
    mean + chol * z
}

fn validate_populations(p: &[f64]) -> Result<()> {
    if p.len() != N_STATES {
        return Err(invalid("populations", format!("expected {N_STATES} entries")));
    }
    if p.iter().any(|&x| !(x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(invalid("populations", "must be non-negative and sum to 1"));
    }
    Ok(())
}

/// Draw `n` labelled shots: a state from `p`, then a point from its cloud.
pub fn synthesize_labeled(p: &[f64], model: &ReadoutModel, n: usize, seed: u64) -> Result<(Vec<IQShot>, Vec<usize>)> {
    validate_populations(p)?;
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let chol: Vec<Matrix2<f64>> = model
        .covariances
        .iter()
        .enumerate()
        .map(|(k, c)| {
            c.cholesky()
                .map(|ch| ch.l())
                .ok_or_else(|| Error::NotPositiveDefinite(format!("covariance of {}", STATE_NAMES[k])))
        })
        .collect::<Result<_>>()?;
    let states = WeightedIndex::new(p).map_err(|e| invalid("populations", e.to_string()))?;
    let chunks: Vec<Vec<(IQShot, usize)>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, "synthesize", c as u64);
            let len = CHUNK.min(n - c * CHUNK);
            (0..len)
                .map(|_| {
                    let k = states.sample(&mut rng);
                    let x = gaussian_sample(&mut rng, &model.means[k], &chol[k]);
                    (IQShot { i: x[0], q: x[1] }, k)
                })
                .collect()
        })
        .collect();
    Ok(chunks.into_iter().flatten().unzip())
}

pub fn synthesize_shots(p: &[f64], model: &ReadoutModel, n: usize, seed: u64) -> Result<Vec<IQShot>> {
    Ok(synthesize_labeled(p, model, n, seed)?.0)
}

/// Calibration set: `n_per_state` shots after preparing each of g, e, f, h.
pub fn synthesize_calibration(model: &ReadoutModel, n_per_state: usize, seed: u64) -> Result<(Vec<IQShot>, Vec<usize>)> {
    let mut shots = Vec::with_capacity(N_STATES * n_per_state);
    let mut labels = Vec::with_capacity(N_STATES * n_per_state);
    for k in 0..N_STATES {
        let mut p = [0.0; N_STATES];
        p[k] = 1.0;
        let (s, l) = synthesize_labeled(&p, model, n_per_state, crate::rng::child_seed(seed, "calibration", k as u64))?;
        shots.extend(s);
        labels.extend(l);
    }
    Ok((shots, labels))
}

/// Probability mass of a 2D Gaussian inside Mahalanobis radius `m`,
/// `1 - exp(-m²/2)`.
pub fn fraction_within_sigma(m: f64) -> f64 {
    -(-0.5 * m * m).exp_m1()
}

fn mahalanobis2(x: &Vector2<f64>, mean: &Vector2<f64>, inv: &Matrix2<f64>) -> f64 {
    let d = x - mean;
    (d.transpose() * inv * d)[(0, 0)]
}

fn sample_mean_cov(points: &[Vector2<f64>]) -> (Vector2<f64>, Matrix2<f64>) {
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector2::zeros(), |a, p| a + p) / n;
    let cov = points.iter().fold(Matrix2::zeros(), |a, p| {
        let d = p - mean;
        a + d * d.transpose()
    }) / n;
    (mean, cov)
}

/// EM starting point.
#[derive(Debug, Clone, PartialEq)]
pub enum GmmInit {
    /// k-means++ seeding followed by Lloyd iterations.
    KMeansPlusPlus,
    /// Start from these means (e.g. per-state calibration means); components
    /// are labelled by matching against them.
    Means(Vec<Vector2<f64>>),
}

/// Fitted Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vector2<f64>>,
    /// Maximum-likelihood (1/N) covariances.
    pub covariances: Vec<Matrix2<f64>>,
    pub log_likelihood: f64,
    /// `labels[c]` is the calibration state assigned to component `c`.
    pub labels: Vec<usize>,
    /// Log-likelihood after every EM iteration since the last re-seed.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub reseeded: bool,
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// Component carrying calibration label `label`.
    pub fn component_for_label(&self, label: usize) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    /// Match components to `reference` means by minimum total squared distance.
    pub fn assign_labels(&mut self, reference: &[Vector2<f64>]) -> Result<()> {
        let k = self.k();
        if reference.len() != k {
            return Err(Error::Range(format!("{} reference means for {k} components", reference.len())));
        }
        let cost = |perm: &[usize]| -> f64 { perm.iter().enumerate().map(|(c, &l)| (self.means[c] - reference[l]).norm_squared()).sum() };
        let mut best: Vec<usize> = (0..k).collect();
        let mut best_cost = cost(&best);
        let mut perm = best.clone();
        for_each_permutation(&mut perm, 0, &mut |p| {
            let c = cost(p);
            if c < best_cost {
                best_cost = c;
                best = p.to_vec();
            }
        });
        self.labels = best;
        Ok(())
    }

    fn log_pdfs(&self) -> Result<Vec<(f64, Matrix2<f64>)>> {
        self.covariances
            .iter()
            .enumerate()
            .map(|(c, cov)| {
                let det = cov.determinant();
                let inv = cov
                    .try_inverse()
                    .filter(|_| det > 0.0)
                    .ok_or(Error::CovarianceCollapse { component: c })?;
                let norm = self.weights[c].ln() - std::f64::consts::TAU.ln() - 0.5 * det.ln();
                Ok((norm, inv))
            })
            .collect()
    }

    /// Total log-likelihood of `shots` under the mixture.
    pub fn score(&self, shots: &[IQShot]) -> Result<f64> {
        let pdfs = self.log_pdfs()?;
        Ok(shots
            .iter()
            .map(|s| {
                let x = s.v();
                let terms: Vec<f64> = pdfs
                    .iter()
                    .zip(&self.means)
                    .map(|((norm, inv), m)| norm - 0.5 * mahalanobis2(&x, m, inv))
                    .collect();
                log_sum_exp(&terms)
            })
            .sum())
    }

    /// Key–value text form with shortest round-trip decimals.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# gaussian mixture model\n");
        s += &format!("k = {}\n", self.k());
        s += &format!("log_likelihood = {}\n", self.log_likelihood);
        s += &format!("iterations = {}\n", self.iterations);
        s += &format!("converged = {}\n", self.converged);
        for c in 0..self.k() {
            let (m, v) = (&self.means[c], &self.covariances[c]);
            s += &format!("component.{c}.label = {}\n", self.labels[c]);
            s += &format!("component.{c}.weight = {}\n", self.weights[c]);
            s += &format!("component.{c}.mean = {} {}\n", m[0], m[1]);
            s += &format!("component.{c}.covariance = {} {} {}\n", v[(0, 0)], v[(0, 1)], v[(1, 1)]);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut kv = std::collections::BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("model line {}: expected key = value", n + 1)))?;
            kv.insert(key.trim().to_string(), value.trim().to_string());
        }
        let get = |key: &str| kv.get(key).ok_or_else(|| Error::Config(format!("model file is missing `{key}`")));
        let num = |key: &str, s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Config(format!("`{key}`: bad number `{s}`"))) };
        let nums = |key: &str, want: usize| -> Result<Vec<f64>> {
            let v = get(key)?
                .split_whitespace()
                .map(|s| num(key, s))
                .collect::<Result<Vec<f64>>>()?;
            if v.len() != want {
                return Err(Error::Config(format!("`{key}`: expected {want} numbers")));
            }
            Ok(v)
        };
        let k: usize = get("k")?.parse().map_err(|_| Error::Config("`k`: bad integer".into()))?;
        let mut model = GmmModel {
            weights: Vec::with_capacity(k),
            means: Vec::with_capacity(k),
            covariances: Vec::with_capacity(k),
            log_likelihood: num("log_likelihood", get("log_likelihood")?)?,
            labels: Vec::with_capacity(k),
            history: Vec::new(),
            iterations: get("iterations")?.parse().map_err(|_| Error::Config("`iterations`: bad integer".into()))?,
            converged: get("converged")? == "true",
            reseeded: false,
        };
        for c in 0..k {
            let label_key = format!("component.{c}.label");
            model.labels.push(
                get(&label_key)?
                    .parse()
                    .map_err(|_| Error::Config(format!("`{label_key}`: bad integer")))?,
            );
            let wk = format!("component.{c}.weight");
            model.weights.push(num(&wk, get(&wk)?)?);
            let m = nums(&format!("component.{c}.mean"), 2)?;
            model.means.push(Vector2::new(m[0], m[1]));
            let v = nums(&format!("component.{c}.covariance"), 3)?;
            let cov = Matrix2::new(v[0], v[1], v[1], v[2]);
            check_spd(&cov, &format!("component {c}"))?;
            model.covariances.push(cov);
        }
        Ok(model)
    }
}

fn for_each_permutation(perm: &mut [usize], start: usize, f: &mut dyn FnMut(&[usize])) {
    if start == perm.len() {
        f(perm);
        return;
    }
    for i in start..perm.len() {
        perm.swap(start, i);
        for_each_permutation(perm, start + 1, f);
        perm.swap(start, i);
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Hard assignment to the nearest center, giving starting weights and covariances.
fn hard_init(points: &[Vector2<f64>], centers: &[Vector2<f64>], fallback: &Matrix2<f64>, floor: f64) -> GmmModel {
    let k = centers.len();
    let mut members: Vec<Vec<Vector2<f64>>> = vec![Vec::new(); k];
    for p in points {
        members[nearest(p, centers)].push(*p);
    }
    let n = points.len() as f64;
    let mut weights = Vec::with_capacity(k);
    let mut covariances = Vec::with_capacity(k);
    for m in &members {
        weights.push((m.len() as f64 / n).max(1.0 / n));
        let cov = if m.len() >= 3 {
            let (_, c) = sample_mean_cov(m);
            if c.determinant() > floor {
                c
            } else {
                *fallback
            }
        } else {
            *fallback
        };
        covariances.push(cov);
    }
    let z: f64 = weights.iter().sum();
    GmmModel {
        weights: weights.into_iter().map(|w| w / z).collect(),
        means: centers.to_vec(),
        covariances,
        log_likelihood: f64::NEG_INFINITY,
        labels: (0..k).collect(),
        history: Vec::new(),
        iterations: 0,
        converged: false,
        reseeded: false,
    }
}

fn nearest(p: &Vector2<f64>, centers: &[Vector2<f64>]) -> usize {
    (0..centers.len())
        .min_by(|&a, &b| (p - centers[a]).norm_squared().total_cmp(&(p - centers[b]).norm_squared()))
        .expect("at least one center")
}

fn kmeans_pp(points: &[Vector2<f64>], k: usize, seed: u64) -> Vec<Vector2<f64>> {
    let mut rng = stream(seed, "gmm-init", 0);
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    while centers.len() < k {
        let d2: Vec<f64> = points.iter().map(|p| (p - centers[nearest(p, &centers)]).norm_squared()).collect();
        let next = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(&mut rng),
            Err(_) => rng.random_range(0..points.len()),
        };
        centers.push(points[next]);
    }
    for _ in 0..20 {
        let mut sums = vec![(Vector2::zeros(), 0usize); k];
        for p in points {
            let c = nearest(p, &centers);
            sums[c].0 += p;
            sums[c].1 += 1;
        }
        let mut moved = false;
        for (c, (s, n)) in sums.into_iter().enumerate() {
            if n > 0 {
                let new = s / n as f64;
                moved |= new != centers[c];
                centers[c] = new;
            }
        }
        if !moved {
            break;
        }
    }
    centers
}

/// Full-covariance EM for a `k`-component 2D Gaussian mixture.
pub fn fit_gmm(shots: &[IQShot], k: usize, init: &GmmInit, seed: u64) -> Result<GmmModel> {
    if k == 0 {
        return Err(invalid("k", "must be >= 1"));
    }
    if shots.len() < 10 * k {
        return Err(invalid("shots", format!("need at least {} shots for {k} components", 10 * k)));
    }
    let points: Vec<Vector2<f64>> = shots.iter().map(IQShot::v).collect();
    if points.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
        return Err(invalid("shots", "must be finite"));
    }
    let (_, data_cov) = sample_mean_cov(&points);
    let floor = COLLAPSE_FLOOR * data_cov.determinant();
    if !(floor > 0.0) {
        return Err(Error::NotPositiveDefinite("shot cloud has a singular covariance".into()));
    }

    let (centers, reference) = match init {
        GmmInit::KMeansPlusPlus => (kmeans_pp(&points, k, seed), None),
        GmmInit::Means(m) => {
            if m.len() != k {
                return Err(invalid("init", format!("{} means for {k} components", m.len())));
            }
            (m.clone(), Some(m))
        }
    };
    let mut model = hard_init(&points, &centers, &data_cov, floor);
    let mut reseed_rng = stream(seed, "gmm-reseed", 0);
    let mut reseeded = vec![false; k];

    let n = points.len();
    let mut resp = vec![0.0; n * k];
    let mut ll_prev = e_step(&model, &points, &mut resp)?;
    model.history.push(ll_prev);
    for it in 1..=EM_MAX_ITER {
        m_step(&mut model, &points, &resp);
        let mut did_reseed = false;
        for c in 0..k {
            let det = model.covariances[c].determinant();
            if det > floor && model.weights[c] * n as f64 >= 1.0 {
                continue;
            }
            if reseeded[c] {
                return Err(Error::CovarianceCollapse { component: c });
            }
            reseeded[c] = true;
            did_reseed = true;
            model.means[c] = points[reseed_rng.random_range(0..n)];
            model.covariances[c] = data_cov;
            model.weights[c] = 1.0 / k as f64;
            let z: f64 = model.weights.iter().sum();
            model.weights.iter_mut().for_each(|w| *w /= z);
        }
        let ll = e_step(&model, &points, &mut resp)?;
        model.iterations = it;
        if did_reseed {
            model.reseeded = true;
            model.history.clear();
            model.history.push(ll);
            ll_prev = ll;
            continue;
        }
        debug_assert!(
            ll >= ll_prev - 1e-9 * ll_prev.abs(),
            "EM log-likelihood decreased: {ll_prev} -> {ll}"
        );
        model.history.push(ll);
        let done = (ll - ll_prev).abs() < EM_REL_TOL * ll_prev.abs();
        ll_prev = ll;
        if done {
            model.converged = true;
            break;
        }
    }
    model.log_likelihood = ll_prev;
    if let Some(r) = reference {
        model.assign_labels(r)?;
    }
    Ok(model)
}

/// Mixture fit of a calibration set whose prepared state is known for every
/// shot: component `l` takes the sample moments of the shots labelled `l`.
pub fn fit_gmm_labelled(shots: &[IQShot], labels: &[usize], k: usize) -> Result<GmmModel> {
    if labels.len() != shots.len() {
        return Err(Error::Range("one label per shot required".into()));
    }
    if k == 0 || shots.len() < 10 * k {
        return Err(invalid("shots", format!("need at least {} shots for {k} components", 10 * k)));
    }
    let mut groups: Vec<Vec<Vector2<f64>>> = vec![Vec::new(); k];
    for (s, &l) in shots.iter().zip(labels) {
        if l >= k {
            return Err(Error::Range(format!("label {l} outside 0..{k}")));
        }
        groups[l].push(s.v());
    }
    let n = shots.len() as f64;
    let mut model = GmmModel {
        weights: Vec::with_capacity(k),
        means: Vec::with_capacity(k),
        covariances: Vec::with_capacity(k),
        log_likelihood: f64::NEG_INFINITY,
        labels: (0..k).collect(),
        history: Vec::new(),
        iterations: 1,
        converged: true,
        reseeded: false,
    };
    for (l, g) in groups.iter().enumerate() {
        if g.len() < 3 {
            return Err(Error::Range(format!("label {l} has fewer than 3 calibration shots")));
        }
        let (mean, cov) = sample_mean_cov(g);
        if cov.determinant() <= 0.0 {
            return Err(Error::CovarianceCollapse { component: l });
        }
        model.weights.push(g.len() as f64 / n);
        model.means.push(mean);
        model.covariances.push(cov);
    }
    model.log_likelihood = model.score(shots)?;
    model.history.push(model.log_likelihood);
    Ok(model)
}

fn e_step(model: &GmmModel, points: &[Vector2<f64>], resp: &mut [f64]) -> Result<f64> {
    let k = model.k();
    let pdfs = model.log_pdfs()?;
    let mut ll = 0.0;
    let mut terms = vec![0.0; k];
    for (x, r) in points.iter().zip(resp.chunks_mut(k)) {
        for c in 0..k {
            terms[c] = pdfs[c].0 - 0.5 * mahalanobis2(x, &model.means[c], &pdfs[c].1);
        }
        let lse = log_sum_exp(&terms);
        ll += lse;
        for c in 0..k {
            r[c] = (terms[c] - lse).exp();
        }
    }
    Ok(ll)
}

fn m_step(model: &mut GmmModel, points: &[Vector2<f64>], resp: &[f64]) {
    let k = model.k();
    let n = points.len() as f64;
    for c in 0..k {
        let nk: f64 = resp.iter().skip(c).step_by(k).sum();
        model.weights[c] = nk / n;
        if nk <= 0.0 {
            model.covariances[c] = Matrix2::zeros();
            continue;
        }
        let mean = points
            .iter()
            .zip(resp.iter().skip(c).step_by(k))
            .fold(Vector2::zeros(), |a, (p, r)| a + p * *r)
            / nk;
        let cov = points
            .iter()
            .zip(resp.iter().skip(c).step_by(k))
            .fold(Matrix2::zeros(), |a, (p, r)| {
                let d = p - mean;
                a + d * d.transpose() * *r
            })
            / nk;
        model.means[c] = mean;
        model.covariances[c] = 0.5 * (cov + cov.transpose());
    }
}

/// Populations extracted from counts inside each component's 1σ ellipse.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationEstimate {
    /// Corrected g, e, f, h populations.
    pub p: [f64; N_STATES],
    /// Shots inside each state's 1σ ellipse.
    pub counts: [usize; N_STATES],
    /// `correction[(i, j)]`: probability that a shot from state j falls in
    /// the 1σ ellipse of state i.
    pub correction: Matrix4<f64>,
    pub condition: f64,
    /// Normalized raw counts, no overlap correction.
    pub uncorrected: [f64; N_STATES],
}

struct Ellipse {
    mean: Vector2<f64>,
    inv: Matrix2<f64>,
}

fn labelled_ellipses(model: &GmmModel) -> Result<Vec<(Ellipse, Matrix2<f64>)>> {
    if model.k() != N_STATES {
        return Err(Error::Range(format!("need a {N_STATES}-component model, got {}", model.k())));
    }
    (0..N_STATES)
        .map(|l| {
            let c = model
                .component_for_label(l)
                .ok_or_else(|| Error::Range(format!("no component labelled {}", STATE_NAMES[l])))?;
            let cov = model.covariances[c];
            let inv = cov.try_inverse().ok_or(Error::CovarianceCollapse { component: c })?;
            let chol = cov
                .cholesky()
                .ok_or_else(|| Error::NotPositiveDefinite(format!("component {c}")))?
                .l();
            Ok((Ellipse { mean: model.means[c], inv }, chol))
        })
        .collect()
}

/// Monte Carlo ellipse-capture matrix of a labelled four-component model.
pub fn correction_matrix(model: &GmmModel, samples_per_component: usize, seed: u64) -> Result<Matrix4<f64>> {
    let ellipses = labelled_ellipses(model)?;
    correction_from(&ellipses, samples_per_component, seed)
}

fn correction_from(ellipses: &[(Ellipse, Matrix2<f64>)], samples: usize, seed: u64) -> Result<Matrix4<f64>> {
    if samples == 0 {
        return Err(invalid("mc_samples", "must be > 0"));
    }
    let mut m = Matrix4::zeros();
    for j in 0..N_STATES {
        let (src, chol) = &ellipses[j];
        let name = format!("correction-{j}");
        let hits = (0..samples.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut rng = stream(seed, &name, c as u64);
                let mut hits = [0usize; N_STATES];
                for _ in 0..CHUNK.min(samples - c * CHUNK) {
                    let x = gaussian_sample(&mut rng, &src.mean, chol);
                    for (i, (e, _)) in ellipses.iter().enumerate() {
                        if mahalanobis2(&x, &e.mean, &e.inv) <= 1.0 {
                            hits[i] += 1;
                        }
                    }
                }
                hits
            })
            .reduce(|| [0; N_STATES], |a, b| std::array::from_fn(|i| a[i] + b[i]));
        for i in 0..N_STATES {
            m[(i, j)] = hits[i] as f64 / samples as f64;
        }
    }
    Ok(m)
}

/// Count shots inside each 1σ ellipse and invert the overlap matrix.
pub fn estimate_populations(shots: &[IQShot], model: &GmmModel, mc_samples: usize, seed: u64) -> Result<PopulationEstimate> {
    PopulationEstimator::new(model, mc_samples, seed)?.estimate(shots)
}

/// A labelled model with its overlap matrix, reusable across datasets.
pub struct PopulationEstimator {
    ellipses: Vec<(Ellipse, Matrix2<f64>)>,
    pub correction: Matrix4<f64>,
    pub condition: f64,
}

impl PopulationEstimator {
    pub fn new(model: &GmmModel, mc_samples: usize, seed: u64) -> Result<Self> {
        let ellipses = labelled_ellipses(model)?;
        let correction = correction_from(&ellipses, mc_samples, seed)?;
        let sv = correction.singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::IllConditioned(condition));
        }
        Ok(Self {
            ellipses,
            correction,
            condition,
        })
    }

    pub fn estimate(&self, shots: &[IQShot]) -> Result<PopulationEstimate> {
        let mut counts = [0usize; N_STATES];
        for s in shots {
            let x = s.v();
            for (i, (e, _)) in self.ellipses.iter().enumerate() {
                if mahalanobis2(&x, &e.mean, &e.inv) <= 1.0 {
                    counts[i] += 1;
                }
            }
        }
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::Range("no shots inside any 1σ ellipse".into()));
        }
        let c = Vector4::from_iterator(counts.iter().map(|&x| x as f64));
        let x = self
            .correction
            .lu()
            .solve(&c)
            .ok_or(Error::IllConditioned(self.condition))?;
        let clipped = x.map(|v| v.max(0.0));
        let z = clipped.sum();
        if !(z > 0.0) {
            return Err(Error::Range("corrected populations are all non-positive".into()));
        }
        Ok(PopulationEstimate {
            p: std::array::from_fn(|i| clipped[i] / z),
            counts,
            correction: self.correction,
            condition: self.condition,
            uncorrected: counts.map(|n| n as f64 / total as f64),
        })
    }
}

/// Write shots as CSV `i,q` or `i,q,label`.
pub fn write_shots<W: Write>(w: W, shots: &[IQShot], labels: Option<&[usize]>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    match labels {
        Some(l) => {
            if l.len() != shots.len() {
                return Err(Error::Range("one label per shot required".into()));
            }
            out.write_record(["i", "q", "label"])?;
            for (s, l) in shots.iter().zip(l) {
                out.write_record([s.i.to_string(), s.q.to_string(), l.to_string()])?;
            }
        }
        None => {
            out.write_record(["i", "q"])?;
            for s in shots {
                out.write_record([s.i.to_string(), s.q.to_string()])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct ShotRow {
    i: f64,
    q: f64,
    label: Option<usize>,
}

/// Read shots; labels are returned only if every row has one.
pub fn read_shots<R: Read>(r: R) -> Result<(Vec<IQShot>, Option<Vec<usize>>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut shots = Vec::new();
    let mut labels = Vec::new();
    for row in rdr.deserialize() {
        let row: ShotRow = row?;
        if !(row.i.is_finite() && row.q.is_finite()) {
            return Err(invalid("shots", "i and q must be finite"));
        }
        shots.push(IQShot { i: row.i, q: row.q });
        labels.push(row.label);
    }
    let labels = labels.iter().all(Option::is_some).then(|| labels.into_iter().flatten().collect());
    Ok((shots, labels.filter(|l: &Vec<usize>| !l.is_empty())))
}

/// Per-label sample means of a labelled calibration set.
pub fn calibration_means(shots: &[IQShot], labels: &[usize], k: usize) -> Result<Vec<Vector2<f64>>> {
    let mut sums = vec![(Vector2::zeros(), 0usize); k];
    for (s, &l) in shots.iter().zip(labels) {
        if l >= k {
            return Err(Error::Range(format!("label {l} outside 0..{k}")));
        }
        sums[l].0 += s.v();
        sums[l].1 += 1;
    }
    sums.into_iter()
        .enumerate()
        .map(|(l, (s, n))| {
            if n == 0 {
                Err(Error::Range(format!("no calibration shots with label {l}")))
            } else {
                Ok(s / n as f64)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shots_of(points: &[(f64, f64)]) -> Vec<IQShot> {
        points.iter().map(|&(i, q)| IQShot { i, q }).collect()
    }

    #[test]
    fn sigma_fraction_closed_form() {
        assert_eq!(fraction_within_sigma(0.0), 0.0);
        assert!((fraction_within_sigma(1.0) - 0.393_469_340_287_366_6).abs() < 1e-15);
        assert!((fraction_within_sigma(3.0) - (1.0 - (-4.5f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn empty_synthesis() {
        let m = ReadoutModel::from_geometry(&ReadoutGeometry::default()).unwrap();
        assert!(synthesize_shots(&[0.25; 4], &m, 0, 1).unwrap().is_empty());
    }

    #[test]
    fn geometry_spacing() {
        let m = ReadoutModel::from_geometry(&ReadoutGeometry::default()).unwrap();
        for k in 0..4 {
            let d = (m.means[k] - m.means[(k + 1) % 4]).norm();
            assert!((d - 3.0).abs() < 1e-12);
        }
        assert_eq!(m.covariances[3][(0, 0)], 2.0);
    }

    #[test]
    fn non_spd_rejected() {
        let bad = Matrix2::new(1.0, 2.0, 2.0, 1.0);
        let m = ReadoutModel::new([Vector2::zeros(); 4], [Matrix2::identity(), bad, Matrix2::identity(), Matrix2::identity()]);
        assert!(matches!(m, Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn single_component_is_sample_moments() {
        let pts: Vec<(f64, f64)> = (0..50).map(|i| ((i as f64 * 0.37).sin() * 3.0, (i as f64 * 1.3).cos() + 0.1 * i as f64)).collect();
        let shots = shots_of(&pts);
        let g = fit_gmm(&shots, 1, &GmmInit::KMeansPlusPlus, 0).unwrap();
        let (mean, cov) = sample_mean_cov(&shots.iter().map(IQShot::v).collect::<Vec<_>>());
        assert!((g.means[0] - mean).norm() < 1e-10);
        assert!((g.covariances[0] - cov).norm() < 1e-10);
        assert!((g.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_shots() {
        let shots = shots_of(&[(0.0, 0.0); 30]);
        assert!(fit_gmm(&shots, 4, &GmmInit::KMeansPlusPlus, 0).is_err());
    }

    #[test]
    fn model_text_round_trip() {
        let model = ReadoutModel::from_geometry(&ReadoutGeometry::default()).unwrap();
        let (shots, _) = synthesize_calibration(&model, 300, 5).unwrap();
        let g = fit_gmm(&shots, 4, &GmmInit::Means(model.means.to_vec()), 5).unwrap();
        let back = GmmModel::from_text(&g.to_text()).unwrap();
        assert_eq!(back.means, g.means);
        assert_eq!(back.covariances, g.covariances);
        assert_eq!(back.weights, g.weights);
        assert_eq!(back.labels, g.labels);
        assert_eq!(back.log_likelihood, g.log_likelihood);
    }

    #[test]
    fn shot_csv_round_trip() {
        let shots = shots_of(&[(0.1, -2.5), (1e-17, 3.0)]);
        let mut buf = Vec::new();
        write_shots(&mut buf, &shots, Some(&[0, 3])).unwrap();
        let (back, labels) = read_shots(buf.as_slice()).unwrap();
        assert_eq!(back, shots);
        assert_eq!(labels, Some(vec![0, 3]));
        let mut buf = Vec::new();
        write_shots(&mut buf, &shots, None).unwrap();
        assert_eq!(read_shots(buf.as_slice()).unwrap().1, None);
    }

    #[test]
    fn folding() {
        let p = [0.4, 0.3, 0.1, 0.1, 0.06, 0.04];
        let t = fold_populations(&p, Folding::Truncate).unwrap();
        assert!((t[0] - 0.4 / 0.9).abs() < 1e-15);
        let l = fold_populations(&p, Folding::LumpIntoH).unwrap();
        assert!((l[3] - 0.2).abs() < 1e-15);
    }
}
