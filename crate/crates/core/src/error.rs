use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand extents are incompatible for the requested operation.
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    /// A value became NaN or infinite where a finite one is required.
    Numeric(String),
    /// Invalid configuration or protocol parameter.
    Config(String),
    /// Trip ingestion problem (unknown station and similar).
    Ingest { position: usize, message: String },
    /// API misuse such as querying an unfitted baseline.
    Usage(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, left, right } => {
                write!(f, "dimension error in {op}: shapes {left:?} and {right:?}")
            }
            Error::Numeric(m) => write!(f, "numeric error: {m}"),
            Error::Config(m) => write!(f, "configuration error: {m}"),
            Error::Ingest { position, message } => {
                write!(f, "ingestion error at record {position}: {message}")
            }
            Error::Usage(m) => write!(f, "usage error: {m}"),
        }
    }
}

impl core::error::Error for Error {}
