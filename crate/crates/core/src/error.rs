use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("value at index {index} is not finite")]
    NonFinite { index: usize },

    #[error("probability at index {index} is zero")]
    ZeroProbability { index: usize },

    #[error("not a probability distribution: {0}")]
    NotADistribution(String),

    #[error("deviation {value} at index {index} exceeds bound {bound}")]
    DeviationOutOfBounds { index: usize, value: f64, bound: f64 },

    #[error("deviations are not mass balanced: sum gamma_i P(i) = {0}")]
    Unbalanced(f64),

    #[error("index {index} out of range for population of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("enumeration of {outcomes} outcomes exceeds the budget of {budget}")]
    BudgetExceeded { outcomes: u128, budget: u128 },

    #[error("pole: denominator vanishes at i = {0}")]
    Pole(usize),

    #[error("level {level} rounds to zero points")]
    EmptyLevel { level: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidParameter(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
