use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point lies outside the closed half-space (x_d = {0})")]
    OutsideHalfSpace(f64),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("coefficient hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("pole of the gamma function at z = {0}")]
    GammaPole(String),

    #[error("overflow evaluating {0}")]
    Overflow(String),

    #[error("series failed to converge: {0}")]
    NoConvergence(String),

    #[error("quadrature did not reach tolerance: {0}")]
    Quadrature(String),

    #[error("linear solver failed after {iterations} iterations (relative residual {residual:e})")]
    LinearSolver {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("spectral solve failed for {} mode(s): {}", .0.len(), summarize(.0))]
    Modes(Vec<(usize, String)>),

    #[error("missing derivative data for multi-index {0:?}")]
    MissingDerivative(Vec<usize>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn summarize(failures: &[(usize, String)]) -> String {
    failures
        .iter()
        .take(4)
        .map(|(k, msg)| format!("mode {k}: {msg}"))
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
