use thiserror::Error;

use crate::covariance::ParamVector;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("design points {first} and {second} coincide")]
    DuplicatePoint { first: usize, second: usize },

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("factorization failed at sigma2={}, alpha={}: {source}", .theta.sigma2, .theta.alpha)]
    Factorization {
        theta: ParamVector,
        #[source]
        source: Box<Error>,
    },

    #[error("observation vector is identically zero")]
    ZeroObservations,

    #[error("direction vector must have unit norm, got norm {0}")]
    NonUnitDirection(f64),

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("every start failed: {}", .attempts.join("; "))]
    FitFailed { attempts: Vec<String> },

    #[error("invalid config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{0} exists; pass --force to overwrite")]
    OutputExists(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
