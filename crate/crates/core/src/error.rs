use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("structural mismatch: {0}")]
    Structural(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("training diverged at task {task}, step {step}: {detail}")]
    Divergence {
        task: usize,
        step: usize,
        detail: String,
    },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("ingestion error, {} gap(s): {}", gaps.len(), gaps.join("; "))]
    Ingestion { gaps: Vec<String> },

    #[error("format error: {0}")]
    Format(String),

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("{path}: {source}")]
    Path {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn at_path(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Error {
        let path = path.into();
        move |source| Error::Path { path, source }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// 1 = configuration, 2 = data, 3 = divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Structural(_) | Error::Comparison(_) | Error::Undefined(_) => 1,
            Error::Divergence { .. } => 3,
            Error::Data(_)
            | Error::EmptyBuffer
            | Error::Manifest(_)
            | Error::Ingestion { .. }
            | Error::Format(_)
            | Error::Path { .. }
            | Error::Io(_) => 2,
        }
    }
}
