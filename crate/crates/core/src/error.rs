use thiserror::Error;

/// Errors raised by schedule construction, model evaluation, sampling and the
/// identity checks.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("step index {index} out of range 1..={n_steps}")]
    IndexOutOfRange { index: usize, n_steps: usize },

    #[error("degenerate time argument t = {t}: {reason}")]
    DegenerateTime { t: f64, reason: &'static str },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid reward: {0}")]
    InvalidReward(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid guidance config: {0}")]
    InvalidGuidance(String),

    #[error("iterate left the finite range at step {step} (value {value})")]
    NonFinite { step: usize, value: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("histogram distance supports dimensions 1 and 2, got {0}")]
    DimensionTooHigh(usize),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("trial {trial}: {source}")]
    InTrial { trial: u64, source: Box<Error> },
}

impl Error {
    pub(crate) fn in_trial(self, trial: u64) -> Self {
        Error::InTrial {
            trial,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
