use thiserror::Error;

/// Errors raised by the group machinery, the filter and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("outside the logarithm domain: {0}")]
    Domain(String),

    #[error("degenerate depth {depth:e} (must exceed {min:e})")]
    DegenerateDepth { depth: f64, min: f64 },

    #[error("insufficient parallax: {0}")]
    InsufficientParallax(String),

    #[error("feature behind a camera or outside depth bounds: {0}")]
    NegativeDepth(String),

    #[error("triangulation did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("innovation covariance is singular (condition {condition:e})")]
    SingularInnovation { condition: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
