use std::io;

use thiserror::Error;

/// Errors surfaced by the front end, each tied to a process exit code.
#[derive(Debug, Error)]
pub enum AppError {
    /// Bad flags or malformed input files (exit 2).
    #[error("{0}")]
    Usage(String),
    /// Well-formed request that cannot be carried out (exit 3).
    #[error("{0}")]
    Infeasible(String),
    /// A checked property does not hold (exit 1).
    #[error("{0}")]
    Violation(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Core(#[from] noisysum_core::Error),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        use noisysum_core::Error as E;
        match self {
            AppError::Violation(_) => 1,
            AppError::Usage(_) | AppError::Io(_) => 2,
            AppError::Infeasible(_) => 3,
            AppError::Core(e) => match e {
                E::BudgetExceeded { .. } | E::InvalidParameter(_) | E::Pole(_) | E::EmptyLevel { .. } => 3,
                _ => 2,
            },
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;

pub(crate) fn usage(msg: impl Into<String>) -> AppError {
    AppError::Usage(msg.into())
}

pub(crate) fn infeasible(msg: impl Into<String>) -> AppError {
    AppError::Infeasible(msg.into())
}
