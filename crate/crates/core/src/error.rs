use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpcError {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data is malformed (bad header, wrong schema, inconsistent lengths).
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

impl SpcError {
    pub fn domain(msg: impl Into<String>) -> Self {
        SpcError::Domain(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        SpcError::Format(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SpcError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by invalid input rather than the environment.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            SpcError::Domain(_) | SpcError::Format(_) | SpcError::Json(_) | SpcError::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, SpcError>;
