use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("conjugate gradient did not converge after {iterations} iterations (residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("sufficient decrease violated at iteration {iteration}: margin {margin:e}")]
    SufficientDecreaseViolated { iteration: usize, margin: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            found,
        }
    }
}
