use thiserror::Error;

pub type SResult<T> = Result<T, SwapError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwapError {
    #[error("space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("slot {slot} out of range for space with {len} subsystems")]
    SlotOutOfRange { slot: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },

    #[error("no swap solution: {0}")]
    NoSolution(String),

    #[error("norm drift {drift:.3e} exceeds allowed {allowed:.3e}; reduce the step")]
    NormDrift { drift: f64, allowed: f64 },

    #[error("cavity cutoff not converged: observable shift {shift:.3e} > {tolerance:.3e} at N_c = {cutoff}")]
    CutoffNotConverged { cutoff: usize, shift: f64, tolerance: f64 },

    #[error("time {t} outside trajectory range [{t0}, {t1}]")]
    OutOfRange { t: f64, t0: f64, t1: f64 },

    #[error("unknown label `{0}`")]
    UnknownLabel(String),
}

impl SwapError {
    pub(crate) fn param(key: &str, reason: impl Into<String>) -> Self {
        Self::InvalidParameter { key: key.to_string(), reason: reason.into() }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Self::NoSolution(_) | Self::NormDrift { .. } | Self::CutoffNotConverged { .. }
        )
    }
}
