use std::path::PathBuf;

use crate::coalition::Coalition;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },

    #[error("quadrature did not converge (achieved error estimate {residual:e})")]
    Quadrature { residual: f64 },

    #[error("root not bracketed below t = {limit}")]
    RootNotBracketed { limit: f64 },

    #[error("Newton-Raphson did not converge after {iterations} iterations (gradient norms: {trace:?})")]
    NotConverged { iterations: usize, trace: Vec<f64> },

    #[error("coefficient norm diverged to {norm:e}; data are likely separated")]
    Separation { norm: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("exact evaluation needs about {required} bytes, budget is {budget}")]
    MemoryBudget { required: u128, budget: u128 },

    #[error("value table is incomplete: {0}")]
    IncompleteTable(String),

    #[error("no comparable pairs")]
    NoComparablePairs,

    #[error("censoring survival reaches zero at t = {t}")]
    CensoringExhausted { t: f64 },

    #[error("prediction failed for coalition {coalition}: {source}")]
    Prediction {
        coalition: Coalition,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
