use num_complex::Complex64;
use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: String, reason: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("matrix is numerically singular (sigma_min/sigma_max = {ratio:e})")]
    Singular { ratio: f64 },

    #[error("resolvent evaluated at the pole z = 0")]
    Pole,

    #[error("inner SMW system singular at z = {z}")]
    SingularAt { z: Complex64 },

    #[error("z = {z} is an eigenvalue of the operator")]
    EigenvalueHit { z: Complex64 },

    #[error("contour collision: eigenvalues {eigenvalues:?} lie on or near the contour")]
    ContourCollision { eigenvalues: Vec<Complex64> },

    #[error("inconsistent spectral data: {0}")]
    Inconsistent(String),

    #[error("degenerate {0}")]
    Degenerate(String),

    #[error("trajectory diverged at step {step} (|x| = {norm:e})")]
    Divergence { step: usize, norm: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Prefixes the field path of a parameter error with `prefix`.
    pub(crate) fn at(self, prefix: &str) -> Self {
        match self {
            Error::Parameter { name, reason } => Error::config(format!("{prefix}.{name}"), reason),
            Error::Config { path, reason } => Error::config(format!("{prefix}.{path}"), reason),
            other => other,
        }
    }

    /// Process exit code for the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Config { .. } | Error::Json(_) | Error::Parameter { .. } => 2,
            Error::Io(_) => 4,
            _ => 3,
        }
    }
}
