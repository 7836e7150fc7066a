use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),

    #[error("unsupported wavelet pair CDF({d},{dt})")]
    UnsupportedWavelet { d: usize, dt: usize },

    #[error("level {level} is too coarse for the filter support (need at least {min})")]
    LevelTooCoarse { level: usize, min: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not symmetric positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("conjugate gradient breakdown at iteration {iteration}: p^T A p = {curvature:e}")]
    CgBreakdown { iteration: usize, curvature: f64 },

    #[error("Lanczos did not converge in {iterations} steps (best bounds [{lo:e}, {hi:e}])")]
    LanczosNoConvergence { iterations: usize, lo: f64, hi: f64 },

    #[error("truncated spectrum tail {tail:e} exceeds tolerance; need at least {required} modes")]
    SpectrumTail { tail: f64, required: usize },

    #[error("observation supports overlap: functionals {0} and {1}")]
    OverlappingObservations(usize, usize),

    #[error("observation {index} is not resolved at level {level}: {reason}")]
    UnresolvedObservation { index: usize, level: usize, reason: String },

    #[error("sample source exhausted after {delivered} of {requested} samples")]
    SourceExhausted { delivered: usize, requested: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// True for failures of the numerical kind (SPD loss, solver breakdown)
    /// as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::NotPositiveDefinite(_)
                | Error::CgBreakdown { .. }
                | Error::LanczosNoConvergence { .. }
        )
    }
}
