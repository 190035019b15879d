use alloc::string::String;

/// Errors produced by the analytics core.
///
/// Operations never panic on malformed input; every contract violation
/// maps onto one of these variants.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoreError {
    /// A per-stream operation needs at least two samples.
    #[error("insufficient stream: ({freq_index}, {link_id}) has {got} samples, need {need}")]
    InsufficientStream {
        freq_index: u16,
        link_id: u32,
        got: usize,
        need: usize,
    },

    /// Phase operations are only defined for complex CQI types.
    #[error("phase undefined for cqi_type {0}")]
    PhaseUndefined(String),

    /// Adjacent-subcarrier analysis needs at least two subcarriers.
    #[error("phase difference undefined: freq_count {0} < 2")]
    PhaseDifferenceUndefined(u16),

    /// Segmentation requires a calibration profile.
    #[error("uncalibrated: {0}")]
    Uncalibrated(String),

    /// Vector/matrix dimensions do not line up.
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    /// A named parameter is outside its admissible range.
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: String, reason: String },

    /// A training class has no examples or is missing entirely.
    #[error("class {0:?}: {1}")]
    BadClass(String, String),

    /// The Jacobi eigensolver failed to converge.
    #[error("eigendecomposition did not converge after {0} sweeps")]
    NoConvergence(usize),

    /// Every mixture component underflowed; no decision is possible.
    #[error("no evidence: all mixture components underflowed")]
    NoEvidence,

    /// A latent label does not resolve (unknown cell, missing stats).
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
}

impl CoreError {
    pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Self {
        CoreError::InvalidParameter {
            name: String::from(name),
            reason: reason.into(),
        }
    }

    pub(crate) fn dims(expected: usize, got: usize, context: &str) -> Self {
        CoreError::DimensionMismatch {
            expected,
            got,
            context: String::from(context),
        }
    }
}
