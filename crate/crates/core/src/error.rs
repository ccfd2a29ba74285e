use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("unknown {kind}: {name}")]
    Unknown { kind: &'static str, name: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("weight vector norm {0:e} is too small for the weighted norm")]
    ZeroWeight(f64),
    #[error("non-finite value at row {index} while evaluating {what}")]
    Overflow { what: &'static str, index: usize },
    #[error("diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("budget: {0}")]
    Budget(String),
}

pub type Result<T> = std::result::Result<T, Error>;
