use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("evidence has zero probability")]
    ZeroProbabilityEvidence,

    #[error("selection is infeasible for variable `{variable}`, category {category}: {reason}")]
    InfeasibleSelection {
        variable: String,
        category: usize,
        reason: String,
    },

    #[error("selection solver did not converge after {sweeps} sweeps (residual {residual:e})")]
    SolverNoConvergence { sweeps: usize, residual: f64 },

    #[error(
        "candidate pool has {pool_size} variables; enumerating 2^{pool_size} subsets exceeds the limit of 2^{max_pool}. Set a maximum subset size to proceed"
    )]
    EnumerationLimit { pool_size: usize, max_pool: usize },

    #[error("all {0} Monte-Carlo iterations hit a zero-probability stratum")]
    DegenerateScore(usize),

    #[error("state space of {0} configurations is too large to enumerate")]
    StateSpaceTooLarge(f64),

    #[error("selection acceptance probability {0:e} is too small to simulate")]
    PathologicalSelection(f64),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse classification used for exit codes and C status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Infeasible,
    Enumeration,
    Io,
    Other,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parse { .. }
            | Error::Schema(_)
            | Error::Validation(_)
            | Error::UnknownVariable(_)
            | Error::Json(_)
            | Error::Csv(_) => ErrorKind::Validation,
            Error::InfeasibleSelection { .. } | Error::SolverNoConvergence { .. } => {
                ErrorKind::Infeasible
            }
            Error::EnumerationLimit { .. } => ErrorKind::Enumeration,
            Error::Io { .. } => ErrorKind::Io,
            _ => ErrorKind::Other,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
