use std::path::{Path, PathBuf};

/// Errors surfaced by the IO layer and the command line.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] wsmil_core::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    /// Process exit code: 2 config validation, 3 I/O or data, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        use wsmil_core::Error as C;
        match self {
            Error::Config(_) => 2,
            Error::Io { .. } | Error::Format { .. } => 3,
            Error::Core(e) => match e {
                C::InvalidConfig(_)
                | C::InvalidSpec { .. }
                | C::InvalidSettings(_)
                | C::InvalidGridStep(_)
                | C::InvalidDims(_)
                | C::InvalidLearningRate(_)
                | C::InvalidPercentiles { .. } => 2,
                C::NonFinite(_) | C::NonFiniteLoss { .. } => 4,
                _ => 3,
            },
        }
    }
}
