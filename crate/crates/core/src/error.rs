use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Variants split into two families that the CLI maps onto exit codes:
/// contract/validation failures (bad arguments, bad data) and
/// I/O/format failures (unreadable or malformed files).
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition of an operation was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Loaded data parsed but failed a value check (e.g. NaN).
    #[error("validation error: {0}")]
    Validation(String),

    /// A text file could not be parsed.
    #[error("parse error at line {line}{}: {msg}", col.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse {
        line: usize,
        col: Option<usize>,
        msg: String,
    },

    /// A binary file had a bad header.
    #[error("format error: {0}")]
    Format(String),

    /// A binary payload was shorter or longer than its header declares.
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    /// A proximal-gradient run with a fixed step blew up.
    #[error("objective diverged at iteration {iteration} ({previous} -> {current})")]
    Divergence {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),

    /// A pipeline stage failed; wraps the underlying cause.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for I/O and file-format failures, false for contract,
    /// validation and numerical failures.
    pub fn is_io_or_format(&self) -> bool {
        match self {
            Error::Io { .. } | Error::Format(_) | Error::Truncated { .. } | Error::Parse { .. } => {
                true
            }
            Error::Stage { source, .. } => source.is_io_or_format(),
            _ => false,
        }
    }

    /// Process exit code: 1 for contract/validation, 2 for I/O or format.
    pub fn exit_code(&self) -> i32 {
        if self.is_io_or_format() {
            2
        } else {
            1
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
