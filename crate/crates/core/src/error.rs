use thiserror::Error;

/// Errors raised anywhere in the simulation and analysis pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid Hilbert dimension {0} (supported: 2..={max})", max = crate::qcore::MAX_DIM)]
    InvalidDimension(usize),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("shape mismatch: expected dimension {expected}, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("integrator failure in segment `{segment}`: {detail}")]
    IntegratorFailure { segment: String, detail: String },

    #[error("parity trajectory covers {covered} us but the sequence needs {needed} us")]
    Coverage { covered: f64, needed: f64 },

    #[error("signal shows no oscillation to fit")]
    NoOscillation,

    #[error("fit input invalid: {0}")]
    FitInput(String),

    #[error("no pulse duration in the grid resolves the parity peaks")]
    NotResolvable,

    #[error("line {line}: column `{column}`: {reason}")]
    Parse { line: u64, column: String, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
