use thiserror::Error;

/// Errors raised by the q-calculus layer, the solvers and the operator realizations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QHeatError {
    #[error("deformation parameter q = {0} must satisfy 0 < q < 1")]
    InvalidQ(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value encountered in {what} at t = {at}")]
    NonFinite { what: &'static str, at: f64 },

    #[error("x = {x} lies outside the convergence region (1-q)|x| < 1 for q = {q}")]
    OutsideConvergence { x: f64, q: f64 },

    #[error("product factor {index} is nonpositive ({value}) for x = {x}")]
    NonPositiveFactor { x: f64, index: usize, value: f64 },

    #[error("lattice index {index} is not an interior point (interior indices are 0..{depth})")]
    NotInterior { index: usize, depth: usize },

    #[error("time {t} is outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("upsilon({t}) = {value} violates the declared bounds [{alpha}, {beta}]")]
    ProfileBound {
        t: f64,
        value: f64,
        alpha: f64,
        beta: f64,
    },

    #[error("source shape g violates its assumption: {0}")]
    SourceShape(String),

    #[error("dimension mismatch: expected {expected} modes, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("spectrum rejected at index {index}: {reason}")]
    Spectrum { index: usize, reason: String },

    #[error("degenerate denominator {value:e} for mode {mode}")]
    DegenerateDenominator { mode: usize, value: f64 },

    #[error("spatial data violates Dirichlet boundary: {0}")]
    Boundary(String),

    #[error("malformed data: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, QHeatError>;

pub(crate) fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(QHeatError::InvalidQ(q))
    }
}

pub(crate) fn check_finite(value: f64, what: &'static str, at: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(QHeatError::NonFinite { what, at })
    }
}
