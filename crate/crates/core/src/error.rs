use thiserror::Error;

/// Errors produced anywhere in the scoring pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("series too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("timestamps not strictly increasing at index {index}")]
    Ordering { index: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("simulation unstable at t = {t:.6} s (|state| = {magnitude:e})")]
    Unstable { t: f64, magnitude: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("insufficient oscillation: found {crossings} mean crossings, need at least {needed}")]
    InsufficientOscillation { crossings: usize, needed: usize },

    #[error("degenerate trajectory: reference series has zero variance")]
    DegenerateTrajectory,

    #[error("training diverged at iteration {iteration}: data loss {data_loss}, physics loss {physics_loss}")]
    Diverged {
        iteration: usize,
        data_loss: f64,
        physics_loss: f64,
    },

    #[error("{path}: line {line}: {message}")]
    Schema { path: String, line: usize, message: String },

    #[error("empty batch")]
    EmptyBatch,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
