use thiserror::Error;

/// Crate-wide error type.
///
/// `Unstable` is load-bearing: the DG scheme without viscosity is expected to
/// blow up on shock problems, and callers (trainer, CLI) react to it rather
/// than treating it as a bug.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("tensors belong to different tapes")]
    TapeMismatch,

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("tape already consumed by a backward pass")]
    TapeConsumed,

    #[error("numerical instability at step {step} (t = {time:.6}): {reason}")]
    Unstable { step: usize, time: f64, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("corrupt or incompatible file: {0}")]
    Corrupt(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
