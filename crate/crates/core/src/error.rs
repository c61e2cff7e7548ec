use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, hyperparameters or config files that cannot describe a valid model.
    #[error("configuration error: {0}")]
    Config(String),

    /// API misuse (non-scalar loss, repeated backward, out-of-range patch).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("video error: {0}")]
    Video(String),

    #[error("bitstream error: {0}")]
    Bitstream(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn bitstream(msg: impl Into<String>) -> Self {
        Error::Bitstream(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) => 2,
            Error::Io { .. } | Error::Video(_) => 3,
            Error::Bitstream(_) => 4,
            Error::Numeric(_) => 5,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}
