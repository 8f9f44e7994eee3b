use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("dirac interaction has no pointwise value; it is resolved during assembly")]
    UnsupportedPointwiseEvaluation,

    #[error("invalid domain: {0}")]
    Domain(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid model: covariance is not positive semidefinite within jitter {jitter:e} ({context})")]
    InvalidModel { context: String, jitter: f64 },

    #[error("numerical conditioning: {0}")]
    NumericalConditioning(String),

    #[error("out of regime: {0}")]
    OutOfRegime(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("optimization failed after {starts} start(s): {message}")]
    OptimizationFailure { starts: usize, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by floating-point behaviour rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::InvalidModel { .. }
                | Error::NumericalConditioning(_)
                | Error::OptimizationFailure { .. }
        )
    }
}
