use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A combinatorial size guard refused to run (enumeration, antecedent
    /// mining, inclusion-exclusion).
    #[error("size guard tripped: {0}")]
    Guard(String),

    /// Statistics that do not belong to the structure they were passed with.
    #[error("inconsistent input: {0}")]
    Inconsistent(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
