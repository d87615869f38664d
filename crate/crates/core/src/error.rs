use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = WetError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum WetError {
    /// Operand shapes are incompatible for the requested operation.
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("validation error: {0}")]
    Validation(String),

    /// A non-finite value was produced or consumed.
    #[error("numeric error in {op}: {detail}")]
    Numeric { op: &'static str, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("internal error: {0}")]
    Internal(String),
}

impl WetError {
    pub fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        WetError::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub fn numeric(op: &'static str, detail: impl Into<String>) -> Self {
        WetError::Numeric {
            op,
            detail: detail.into(),
        }
    }

    pub fn invalid(detail: impl Into<String>) -> Self {
        WetError::Validation(detail.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        WetError::Io {
            path: path.into(),
            source,
        }
    }
}
