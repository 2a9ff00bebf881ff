//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("argument error: {0}")]
    Argument(String),

    /// A render produced zero surviving hits; the caller must reposition.
    #[error("empty view: no surface hit survived the render")]
    EmptyView,

    #[error("episode failed after {retries} empty-view retries")]
    EpisodeFailed { retries: u32 },

    #[error("cannot balance dataset: no {missing} records present")]
    Balance { missing: &'static str },

    #[error("dependency error: {0}")]
    Dependency(String),

    #[error("non-finite loss at step {step}; diagnostic dump at {dump}")]
    NonFiniteLoss { step: u64, dump: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    pub fn json(path: impl AsRef<std::path::Path>, source: serde_json::Error) -> Self {
        Error::Json { path: path.as_ref().display().to_string(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
