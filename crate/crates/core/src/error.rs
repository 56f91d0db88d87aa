use thiserror::Error;

use crate::analysis::TrajectoryRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid block partition: {0}")]
    InvalidPartition(String),

    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("second moment of block {block} is zero")]
    ZeroSecondMoment { block: usize },

    #[error("the problem has no known target point")]
    MissingTarget,

    #[error("the problem has no exact moment oracle")]
    MissingOracle,

    #[error("decoupled weight decay needs alpha_t * lambda < 1, got {0}")]
    DecayTooLarge(f64),

    #[error("value {value} at t = {t} is not positive")]
    NonPositive { t: usize, value: f64 },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("trajectory diverged at t = {}: dist_sq = {}", .0.t, .0.dist_sq)]
    Diverged(Box<Divergence>),
}

/// Diagnostic payload carried by [`Error::Diverged`].
#[derive(Debug, Clone)]
pub struct Divergence {
    pub t: usize,
    pub dist_sq: f64,
    /// Records up to and including the offending step.
    pub records: Vec<TrajectoryRecord>,
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub(crate) fn ensure_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}

pub(crate) fn ensure_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(index) => Err(Error::NonFinite {
            index,
            value: values[index],
        }),
    }
}
