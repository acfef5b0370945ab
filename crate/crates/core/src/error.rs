//! Error types shared across the crate.

use thiserror::Error;

/// Errors from fixed-point encoding and the statistics kernel.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericError {
    #[error("value {0} outside the fixed-point dynamic range")]
    Range(f64),
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("vector of length {0} too short for this statistic")]
    TooShort(usize),
    #[error("degenerate vector: zero standard deviation")]
    DegenerateVector,
}

/// Errors from the homomorphic-encryption layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HeError {
    #[error("plaintext {0} outside the plaintext space")]
    PlaintextRange(i128),
    #[error("ciphertext key or backend mismatch")]
    KeyMismatch,
}

/// Errors from the cloud-side attacks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttackError {
    #[error("coordinate pair has zero difference in the additive view")]
    ZeroDelta,
    #[error("views inconsistent with the assumed padding scheme: {0}")]
    InconsistentViews(String),
    #[error("declared own row inconsistent with the view arithmetic")]
    RowMismatch,
    #[error("known-entry anchor is zero; multiplicative chain cannot start")]
    ZeroAnchor,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("side information does not fit this attack: expected {0}")]
    WrongSideInformation(&'static str),
}

/// Errors from running a pipeline round or a scenario trial.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    He(#[from] HeError),
    #[error("invalid shape or configuration: {0}")]
    Invalid(String),
}
