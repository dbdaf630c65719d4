use crate::quadrature::Estimate;

/// Errors raised by the numerical pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("malformed spec at `{token}`: {reason}")]
    Spec { token: String, reason: String },

    #[error("integrand returned a non-finite value at node {node:?}")]
    PoisonedEstimate { node: Vec<f64> },

    #[error("noisy estimate {value} +- {stderr}; increase the node count", value = .0.value, stderr = .0.stderr)]
    NoisyEstimate(Estimate),

    #[error("no root in bracket [{lo}, {hi}] along direction {direction:?}")]
    RootBracket { direction: Vec<f64>, lo: f64, hi: f64 },

    #[error("basis is not orthonormal (deviation {0:e})")]
    NonOrthonormal(f64),

    #[error("unsupported route: {0}")]
    UnsupportedRoute(String),

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("multiplier calibration rejected: relative stderr {rel:.3e} for degree {degree}")]
    Calibration { degree: usize, rel: f64 },

    #[error("construction impossible: {0}")]
    ConstructionImpossible(String),

    #[error("construction failed: {0}")]
    ConstructionFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn spec_err(token: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Spec {
        token: token.into(),
        reason: reason.into(),
    }
}
