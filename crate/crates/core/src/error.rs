//! Error type shared by all solvers and geometric primitives.

use thiserror::Error;

/// Errors produced by geometry, field evaluation, and the fixed-point solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point lies outside the body (worst slack {slack:.3e})")]
    OutsideBody { slack: f64 },

    #[error("invalid body: {0}")]
    InvalidBody(String),

    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("field rejected: {0}")]
    FieldRejected(String),

    #[error("contraction certificate out of range: {0}")]
    BadCertificate(String),

    #[error("maximum iterations ({max_iter}) exceeded; last step {last_step:.3e}, observed contraction ratio {ratio:.3}")]
    MaxIterExceeded {
        max_iter: usize,
        last_step: f64,
        ratio: f64,
    },

    #[error("iteration diverged ({expansions} consecutive expansions); certificate invalid")]
    Diverged { expansions: usize },

    #[error("state left the confinement ball by {excess:.3e}")]
    ConfinementViolated { excess: f64 },

    #[error("linear solve failed: {0}")]
    SingularMatrix(String),

    #[error("bodies of the two elements differ")]
    BodyMismatch,

    #[error("element has no injectivity certificate (Lip(gamma) = {lip:.3})")]
    NoCertificate { lip: f64 },

    #[error("image point escaped the body by {excess:.3e}")]
    ImageEscapes { excess: f64 },

    #[error("finite-difference stencil exits the body at {point:?}; retry with a smaller step")]
    StencilExitsBody { point: Vec<f64> },

    #[error("jet is not a unit (singular linear part)")]
    NonUnitJet,

    #[error("jet shape mismatch: {0}")]
    JetMismatch(String),

    #[error("argument out of domain: {0}")]
    OutOfDomain(String),
}

pub type Result<T> = std::result::Result<T, Error>;
