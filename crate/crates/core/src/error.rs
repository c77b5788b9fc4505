use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library and the `mvsum` executable.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A window offset or shift left the observed range.
    #[error("offset {offset} out of range 0..={len}")]
    Range { offset: i64, len: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data validation failed: {0}")]
    Data(String),

    /// A sampler invariant was breached at runtime.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("empty trace")]
    EmptyTrace,

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) => 3,
            Error::Invariant(_) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
