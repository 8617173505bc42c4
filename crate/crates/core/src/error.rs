use thiserror::Error;

use crate::optim::OptimizationResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("loop closure did not converge at crank angle {crank_angle} rad (residual {residual:e} m)")]
    NoConvergence { crank_angle: f64, residual: f64 },

    #[error("loop {dyad} jumped branch: {jump} rad away from the seed")]
    BranchJump { dyad: usize, jump: f64 },

    #[error("singular mass matrix (condition estimate {condition:e})")]
    SingularMassMatrix { condition: f64 },

    #[error("mass matrix is not positive definite")]
    NonPositiveDefinite,

    #[error("simulation diverged at t = {time} s: {reason}")]
    SimDiverged { time: f64, reason: String },

    #[error("trajectory too short for limit-cycle analysis: {crossings} section crossings, need {needed}")]
    TooShort { crossings: usize, needed: usize },

    #[error("evaluation budget exhausted after {} evaluations", .0.evaluations)]
    BudgetExhausted(Box<OptimizationResult>),

    #[error("failed to parse configuration: {0}")]
    Parse(String),

    #[error("invalid configuration at `{key}`: {message}")]
    Validation { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation { key: key.into(), message: message.into() }
    }
}
