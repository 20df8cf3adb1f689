use thiserror::Error;

/// Errors raised by model construction, solvers and learners.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("index out of range: {what} = {index} (limit {limit})")]
    IndexOutOfRange { what: &'static str, index: usize, limit: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("support violation at t={t}, x={x}, u={u}: controlled process puts mass where the prior has none")]
    Support { t: usize, x: usize, u: usize },

    #[error("no convergence after {iterations} iterations: {detail}")]
    NonConvergent { iterations: usize, detail: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("matrix not positive definite at {context}")]
    NotPositiveDefinite { context: String },

    #[error("linear solve failed: {0}")]
    Singular(String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
