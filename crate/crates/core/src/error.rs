use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {constraint}")]
    InvalidSpec {
        field: &'static str,
        constraint: String,
    },

    #[error("Hilbert dimension {dim} exceeds cap {cap}")]
    DimensionOverflow { dim: usize, cap: usize },

    #[error("quadrature did not reach tolerance: estimate {value:e}, error {error:e} after {intervals} intervals")]
    Quadrature {
        value: f64,
        error: f64,
        intervals: usize,
    },

    #[error("rates are not thermal (gamma_up {gamma_up:e} >= gamma_down {gamma_down:e})")]
    NonThermalRates { gamma_down: f64, gamma_up: f64 },

    #[error("populations are not thermal-fittable: {0:?}")]
    NonThermalPopulations(Vec<f64>),

    #[error("integrator failure at step {step} (t = {time} ns): trace {trace}, min eigenvalue {min_eigenvalue:e}")]
    Integrator {
        step: usize,
        time: f64,
        trace: f64,
        min_eigenvalue: f64,
    },

    #[error("Lindblad generator has no unique steady state: {0}")]
    SingularGenerator(String),

    #[error("covariance collapsed for component {component}")]
    CovarianceCollapse { component: usize },

    #[error("covariance is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("correction matrix is ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),

    #[error("data out of range: {0}")]
    Range(String),

    #[error("no superconducting gap found in IV curve")]
    NoGap,

    #[error("fit did not converge: {message}")]
    FitNonConvergence { message: String, best: Vec<f64> },

    #[error("config error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, constraint: impl Into<String>) -> Error {
    Error::InvalidSpec {
        field,
        constraint: constraint.into(),
    }
}
