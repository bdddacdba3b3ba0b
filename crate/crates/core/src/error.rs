//! Error type shared across the pipeline.
//!
//! Variants are grouped by the exit code the CLI maps them to: bad
//! configuration (1), bad or inconsistent data (2), training failure (3).

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration: unknown keys, out-of-range values, bad flags.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data (files, records, graphs).
    #[error("data error: {0}")]
    Data(String),

    /// Training could not proceed or diverged.
    #[error("training error: {0}")]
    Training(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Exit code the CLI reports for this error kind.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Data(_) | Error::Io { .. } => 2,
            Error::Training(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
