use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or image shapes disagree.
    #[error("{op}: dimension mismatch on {axes}: {detail}")]
    Dimension {
        op: &'static str,
        axes: String,
        detail: String,
    },

    /// A caller broke an operation's precondition.
    #[error("{0}")]
    Contract(String),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("malformed png {}: {reason}", path.display())]
    MalformedPng { path: PathBuf, reason: String },

    #[error("unsupported png format {}: {format}", path.display())]
    UnsupportedDepth { path: PathBuf, format: String },

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn dim(op: &'static str, axes: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            axes: axes.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error family.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::Contract(_) => "contract",
            Error::MissingFile(_) => "missing-file",
            Error::MalformedPng { .. } => "malformed-png",
            Error::UnsupportedDepth { .. } => "unsupported-depth",
            Error::Io { .. } => "io",
            Error::Dataset(_) => "dataset",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
        }
    }
}
