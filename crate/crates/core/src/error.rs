use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid configuration field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error(
        "Cholesky factorization of (C_KK + {lambda:e} I) failed; matrix is not positive definite"
    )]
    Factorization { lambda: f64 },

    #[error("rate fit needs at least 3 points, got {0}")]
    InsufficientPoints(usize),

    #[error("rate fit is degenerate: {0}")]
    DegenerateFit(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors that stem from bad user configuration.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::InvalidConfig { .. } | Error::Json(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
