use thiserror::Error;

use crate::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("point {0} is not in the domain")]
    PointNotInDomain(Point),

    #[error("content is only defined for positive radius and exponent (r = {r}, beta = {beta})")]
    ContentDomain { r: f64, beta: f64 },

    #[error("infeasible radii schedule at annulus n = {n}: {reason}")]
    InfeasibleSchedule { n: u32, reason: String },

    #[error("evaluation point {0} coincides with a pole")]
    PoleHit(Point),

    #[error("pole {0} is not inside a removed ball with the required margin")]
    PoleOutsideComplement(Point),

    #[error("series tail bound {bound:e} exceeds tolerance {tol:e}")]
    TailNotCertified { bound: f64, tol: f64 },

    #[error("epsilon rule does not make the Lipschitz mass summable: {0}")]
    DivergentNorm(String),

    #[error("transform evaluated at atom point {0}")]
    TransformSingular(Point),

    #[error("moment system has no solution within tolerance (residual {residual:e})")]
    RankDeficient { residual: f64 },

    #[error("aperture condition fails at index {index}")]
    ApertureViolated { index: usize },

    #[error("sequence leaves the domain at index {index}")]
    SequenceLeftDomain { index: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("quadrature is vacuous: both sides below {0:e}")]
    QuadratureUnderflow(f64),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
