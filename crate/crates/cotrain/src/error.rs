//! Error type shared across the crate.

use std::path::PathBuf;

/// Crate-wide error type.
///
/// The CLI maps variants to exit codes: `Config` is a usage/configuration
/// error (exit 2), `Divergence` is a numerical abort (exit 3), everything
/// else is a runtime/IO failure (exit 1).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt checkpoint {}: {msg}", path.display())]
    Checkpoint { path: PathBuf, msg: String },

    #[error("non-finite loss at epoch {epoch}, iteration {iteration}")]
    Divergence { epoch: usize, iteration: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
