use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("value outside family support: {0}")]
    SupportViolation(String),

    #[error("parameter outside domain: {0}")]
    Domain(String),

    #[error("invalid sufficient statistics: {0}")]
    InvalidStats(String),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),

    #[error("unsupported operation for {family}: {op}")]
    Unsupported { family: String, op: &'static str },

    #[error("sufficient statistics are unbounded for {0}; truncation bounds are required")]
    MustTruncate(String),

    #[error("degenerate truncation interval [{v}, {w}] (mass {mass:e})")]
    DegenerateInterval { v: f64, w: f64, mass: f64 },

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("family mismatch: release is {release}, prior is {prior}")]
    FamilyMismatch { release: String, prior: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{context}: {message}")]
    Io { context: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
