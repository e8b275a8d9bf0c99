use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value is outside the operation's domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// The experiment or estimator configuration cannot be honored.
    #[error("configuration error: {0}")]
    Config(String),

    /// An iterative numerical routine did not reach its target accuracy.
    #[error("numerical failure: {message} (achieved tolerance {achieved:.3e})")]
    Numerical { message: String, achieved: f64 },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A failure inside a rate sweep, tagged with where it happened.
    #[error("sweep failed at eps={eps}, rep={rep}, direction={direction}: {source}")]
    Sweep {
        eps: f64,
        rep: usize,
        direction: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 for configuration or argument
    /// problems, 3 for numerical failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) | Error::Config(_) => 2,
            Error::Numerical { .. } => 3,
            Error::Io { .. } => 1,
            Error::Sweep { source, .. } => source.exit_code(),
        }
    }
}
