use core::fmt;

/// Errors surfaced by the estimator and its building blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Two vectors or matrices that must agree in dimension do not.
    DimensionMismatch { expected: usize, got: usize },
    /// An input violated a precondition (empty list, NaN, bad range, ...).
    InvalidInput(&'static str),
    /// A recursion produced non-finite parameters (divergent stepsizes).
    NonFinite(&'static str),
    /// A configuration field failed validation.
    Config(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
