use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the laboratory.
///
/// Variants are grouped by the class of failure so that front ends can map
/// them onto stable exit codes (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    /// Shape or layout mismatch between two pieces of data.
    #[error("structural error: {0}")]
    Structural(String),

    /// A documented precondition of an operation was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// An object was used in the wrong phase of its lifecycle
    /// (stepping a terminal state, backprop through a stale cache).
    #[error("lifecycle error: {0}")]
    Lifecycle(String),

    /// A configuration value is missing, malformed or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Lookup of an agent, key or artifact by name failed.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// Invariant violated while validating data (probability rows, weights).
    #[error("validation error: {0}")]
    Validation(String),

    /// An operation was requested in a mode where it is not permitted.
    #[error("mode error: {0}")]
    Mode(String),

    /// Numerical training fault: a non-finite loss or gradient.
    #[error("training fault in `{param}`: {detail}")]
    TrainingFault { param: String, detail: String },

    /// Required artifacts are missing.
    #[error("missing dependencies: {}", .missing.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    Dependency { missing: Vec<PathBuf> },

    /// A pipeline finished but did not reach the required competence.
    #[error("training failed: {0}")]
    TrainingFailed(String),

    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for this class of error.
    ///
    /// Configuration problems map to 2, missing artifacts to 3 and
    /// numerical training faults to 4. Everything else is 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } => 2,
            Error::Dependency { .. } => 3,
            Error::TrainingFault { .. } | Error::TrainingFailed(_) => 4,
            _ => 1,
        }
    }

    pub(crate) fn fault(param: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::TrainingFault {
            param: param.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
