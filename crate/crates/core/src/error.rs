use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid element order N={0}: must be at least 1")]
    InvalidOrder(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("mesh specification error: {0}")]
    Spec(String),

    #[error("inverted element {element}: det J = {det:e} at xi = {xi:?}")]
    InvertedElement { element: usize, det: f64, xi: [f64; 3] },

    #[error("topology error: {0}")]
    Topology(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("permeability tensor is not SPD at x = {x:?} (element {element})")]
    PermeabilityNotSpd { element: usize, x: [f64; 3] },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("constraint deficiency: {0}")]
    ConstraintDeficiency(String),

    #[error("memory budget exceeded: {what} needs {required} stored entries, budget is {budget}")]
    OutOfMemory {
        what: &'static str,
        required: u64,
        budget: u64,
    },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("ingestion error: {0}")]
    Ingest(String),

    #[error("undefined convergence rate: {0}")]
    UndefinedRate(String),

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse classification used for process exit codes and the C ABI.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    OutOfMemory,
    Solver,
    Data,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::OutOfMemory => 3,
            ErrorCategory::Solver => 4,
            ErrorCategory::Data => 5,
            ErrorCategory::Io => 6,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Config => "config",
            ErrorCategory::OutOfMemory => "out-of-memory",
            ErrorCategory::Solver => "solver",
            ErrorCategory::Data => "data",
            ErrorCategory::Io => "io",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidOrder(_) | Error::Config(_) | Error::Spec(_) | Error::Topology(_) | Error::Comparison(_) => {
                ErrorCategory::Config
            }
            Error::OutOfMemory { .. } => ErrorCategory::OutOfMemory,
            Error::InvertedElement { .. }
            | Error::DimensionMismatch { .. }
            | Error::NotSpd(_)
            | Error::ConstraintDeficiency(_)
            | Error::Solver(_)
            | Error::UndefinedRate(_) => ErrorCategory::Solver,
            Error::PermeabilityNotSpd { .. } | Error::Ingest(_) => ErrorCategory::Data,
            Error::Io(_) => ErrorCategory::Io,
        }
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        });
    }
    Ok(())
}
