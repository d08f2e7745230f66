use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum UmodError {
    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed binary file; `offset` is the byte position of the problem.
    #[error("{what}: malformed at byte {offset}: {message}")]
    Format {
        what: &'static str,
        offset: usize,
        message: String,
    },

    #[error("{what}: unsupported format version {found} (expected {expected})")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("checkpoint does not match the configured model: {0}")]
    ConfigMismatch(String),

    /// Problem in a delimited text input; `line` is 1-based.
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] umod_core::Error),
}

pub type Result<T> = std::result::Result<T, UmodError>;

impl UmodError {
    /// Process exit status for this error: 2 for missing inputs, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            UmodError::NotFound(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            UmodError::NotFound(path)
        } else {
            UmodError::Io { path, source }
        }
    }
}
