use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("agent {agent} out of range for a network of {n} agents")]
    InvalidAgent { agent: usize, n: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("relaxation did not converge within {cap} switches")]
    NonConvergence { cap: usize },

    #[error("agent {agent} switched from A to B after incentives were offered at equilibrium")]
    MonotonicityViolated { agent: usize },

    #[error("no eligible agent to target")]
    NoEligibleAgent,

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("time limit exceeded")]
    Timeout,

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
