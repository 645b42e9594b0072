use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("{0}: file is empty")]
    EmptyInput(String),

    #[error("unknown entity `{id}` in {side} graph")]
    UnknownEntity { id: String, side: &'static str },

    #[error("duplicate alignment pair ({0}, {1})")]
    DuplicateAlignment(String, String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training aborted: {0}")]
    TrainingAborted(String),

    #[error("unknown hyperparameter `{0}`")]
    UnknownParameter(String),

    #[error("all {0} trials failed: {1}")]
    AllTrialsFailed(usize, String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Manifest(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
