//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure classes surfaced by the toolkit.
///
/// The CLI maps these onto process exit codes: `Config` → 2, `Data`, `Parse`
/// and `Io` → 3, `Numeric` → 4.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value or unknown override key.
    #[error("config error: {0}")]
    Config(String),

    /// Input data violates a documented contract (shape, range, emptiness).
    #[error("data error: {0}")]
    Data(String),

    /// A structured input file failed to parse.
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    /// Numeric failure (non-finite value where a finite one is required).
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Parse { .. } | Error::Io(_) => 3,
            Error::Numeric(_) => 4,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn parse(row: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            row,
            message: message.into(),
        }
    }
}
