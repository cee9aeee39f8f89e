use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KbError {
    /// Malformed or inconsistent input (wrong sizes, non-finite entries, grid mismatch).
    #[error("input error: {0}")]
    Input(String),

    /// Input outside the mathematical domain of the operation.
    #[error("domain error: {msg}{}", cell.map(|c| format!(" (cell {c})")).unwrap_or_default())]
    Domain {
        msg: String,
        /// Smallest eigenvalue involved, when the failure is spectral.
        lambda_min: Option<f64>,
        /// Offending cell, when the failure is local to one cell.
        cell: Option<usize>,
    },

    /// A caller-side precondition (e.g. commuting endpoints) does not hold.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// Iterative kernel failed to converge or produced non-finite values.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Corrupt or truncated measure file.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: usize, msg: String },

    /// Filesystem failure.
    #[error("io error: {0}")]
    Io(String),
}

impl KbError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        KbError::Domain {
            msg: msg.into(),
            lambda_min: None,
            cell: None,
        }
    }

    pub(crate) fn singular(msg: impl Into<String>, lambda_min: f64) -> Self {
        KbError::Domain {
            msg: msg.into(),
            lambda_min: Some(lambda_min),
            cell: None,
        }
    }

    /// Attach a cell index to a domain error.
    pub(crate) fn at_cell(self, idx: usize) -> Self {
        match self {
            KbError::Domain {
                msg, lambda_min, ..
            } => KbError::Domain {
                msg,
                lambda_min,
                cell: Some(idx),
            },
            other => other,
        }
    }
}

impl From<std::io::Error> for KbError {
    fn from(e: std::io::Error) -> Self {
        KbError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, KbError>;
