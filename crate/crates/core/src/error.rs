use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("linear solve failed: {reason} (residual {residual:e})")]
    LinearSolve { reason: String, residual: f64 },

    #[error("newton iteration did not converge after {iterations} iterations (residual {residual:e}, tolerance {tolerance:e})")]
    NewtonDivergence {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("time step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("trajectory sample grids differ: {0}")]
    GridMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
