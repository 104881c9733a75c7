use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    /// The session holds fewer samples than a single window. Kept apart from
    /// an empty-but-successful slice so callers can decide to skip or abort.
    #[error("session `{session_id}` has {samples} samples, fewer than one window of {window}")]
    SessionTooShort {
        session_id: String,
        samples: usize,
        window: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("checkpoint decode error: {0}")]
    Decode(String),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error("PKI network was trained against base classifier {expected}, got {found}")]
    Pairing { expected: String, found: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
