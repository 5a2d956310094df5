use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("state {x} outside [0, {barrier}]")]
    Domain { x: f64, barrier: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("CFL condition violated: dt * max|beta| / dx = {ratio:.6} > 1 (pass --override-cfl to force)")]
    Cfl { ratio: f64 },

    #[error("singular tridiagonal system at row {row}")]
    Singular { row: usize },

    #[error("Picard iteration did not converge after {iterations} iterations (last change {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("scenario mismatch: {0}")]
    ScenarioMismatch(String),

    #[error("scenario configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
