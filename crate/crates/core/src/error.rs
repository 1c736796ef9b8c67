//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the {domain} domain")]
    OutOfDomain { domain: String, point: Vec<f64> },

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("numerical blow-up: non-finite drift at particle {particle} (t = {time})")]
    NumericalBlowup { particle: usize, time: f64 },

    #[error("step-size violation: {0}")]
    StepSize(String),

    #[error("density not strictly positive at node {node}")]
    Positivity { node: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("missing dependency: {0}")]
    Dependency(String),

    #[error("witness is a minimiser: relative entropy {entropy} below resolution")]
    WitnessIsMinimiser { entropy: f64 },

    #[error("need at least 2 replicas, got {0}")]
    InsufficientReplicas(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("mean-zero violation: k = 0 coefficient has modulus {0}")]
    MeanZeroViolation(f64),

    #[error("coercivity violated: beta^-1 + W_hat({mode}) = {value} <= 0")]
    Coercivity { mode: i64, value: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
