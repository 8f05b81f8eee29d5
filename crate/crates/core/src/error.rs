use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected n = {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite coordinate in point")]
    NonFinite,

    #[error("point is at the identity (pole) where the map is singular")]
    PoleAtIdentity,

    #[error("pole: gauge distance {distance:e} below {threshold:e}")]
    Pole { distance: f64, threshold: f64 },

    #[error("characteristic point: |z| = {abs_z:e} below threshold {threshold:e}")]
    Characteristic { abs_z: f64, threshold: f64 },

    #[error("alpha = {0} outside (-pi/2, pi/2)")]
    AlphaOutOfRange(f64),

    #[error("invalid stencil: {0}")]
    InvalidStencil(String),

    #[error("series did not converge after {terms} terms (partial value {partial_re}{partial_im:+}i)")]
    NonConvergence {
        terms: usize,
        partial_re: f64,
        partial_im: f64,
    },

    #[error("hypergeometric parameter c is a non-positive integer")]
    InvalidParameter,

    #[error("argument {0} outside [0, 1)")]
    ArgumentOutOfRange(f64),

    #[error("series regime violated: {0}")]
    RegimeViolation(String),

    #[error("ill-conditioned fit: condition estimate {0:e}")]
    IllConditioned(f64),

    #[error("resolution too low: {0}")]
    ResolutionTooLow(String),

    #[error("incompatible data: compatibility gap {gap:e} exceeds tolerance {tol:e}")]
    Incompatible { gap: f64, tol: f64 },

    #[error("field is not circular (defect {0:e})")]
    NotCircular(f64),

    #[error("field evaluation failed: {0}")]
    Evaluation(String),

    #[error("extrapolation did not converge (spread {0:e})")]
    Extrapolation(f64),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("kernel coefficient residual {residual:e} above threshold {threshold:e}")]
    CoefficientResidual { residual: f64, threshold: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
