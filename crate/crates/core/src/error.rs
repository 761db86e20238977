use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("class {class} has no training samples")]
    EmptyClass { class: usize },

    #[error("zero-norm column (class {class}, sample {sample}, modality {modality})")]
    ZeroNormColumn {
        class: usize,
        sample: usize,
        modality: usize,
    },

    #[error("inconsistent dimensions: {0}")]
    Dimension(String),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("class index {class} out of range (classes: {classes})")]
    ClassOutOfRange { class: usize, classes: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value encountered at iteration {iteration}; step size too large?")]
    NonFinite { iteration: usize },

    #[error("oracle did not stabilise: {0}")]
    OracleBudget(String),

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Whether the error stems from bad configuration (as opposed to bad data
    /// or a runtime failure).
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidTree(_)
                | Error::InvalidParameter(_)
                | Error::ClassOutOfRange { .. }
                | Error::Json(_)
        )
    }
}
