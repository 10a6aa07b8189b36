use std::path::PathBuf;

use thiserror::Error;

use crate::graph::LabelVector;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: node index {index} outside [1, {n}]")]
    Range { line: usize, index: i64, n: usize },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A refinement step left at least one community empty. `last_valid`
    /// holds the labels from before the failing step.
    #[error("community {community} became empty at refinement step {step}")]
    ClusterCollapse {
        step: usize,
        community: usize,
        last_valid: LabelVector,
    },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
