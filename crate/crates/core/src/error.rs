use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented precondition (bad dimension, off-manifold point, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Input lies outside the region where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A ratio would be 0/0 (point on the fixed set, zero speed, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("contraction violated at t = {time}: ratio {ratio} exceeds {k}")]
    ContractionViolated { time: f64, ratio: f64, k: f64 },

    /// Trajectory did not reach the requested speed floor.
    #[error("flow did not converge by t = {time} (speed {speed:e})")]
    FlowNotConverged {
        time: f64,
        speed: f64,
        trajectory: Box<crate::flow::FlowTrajectory>,
    },

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("certification failure: {0}")]
    Certification(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
