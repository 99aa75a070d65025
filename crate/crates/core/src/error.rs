use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    /// A value outside the admissible range of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The request is well-formed but beyond what the exact method supports
    /// (e.g. enumeration over `S_m` for large `m`).
    #[error("capability error: {0}")]
    Capability(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::Dimension { expected, found })
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
