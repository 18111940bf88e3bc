use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the inversion pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("radius {radius} is not a multiple of the time step {dt}")]
    MisalignedRadius { radius: f64, dt: f64 },

    #[error("radius {radius} outside [0, {horizon}]")]
    RadiusOutOfRange { radius: f64, horizon: f64 },

    #[error("CFL violation: c_max*dt/dx = {courant:.4} exceeds {limit}")]
    Cfl { courant: f64, limit: f64 },

    #[error("regularization parameter alpha = {0} outside (0, 2]")]
    AlphaOutOfRange(f64),

    #[error(
        "noise level epsilon = {epsilon:e} is not admissible: requires 0 < epsilon < epsilon_0 = {epsilon_zero:e}"
    )]
    Inadmissible { epsilon: f64, epsilon_zero: f64 },

    #[error("linear solve failed at radius {radius}: matrix singular (condition estimate {condition:e})")]
    SingularSystem { radius: f64, condition: f64 },

    #[error("power iteration did not converge after {iterations} iterations (last relative change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },

    #[error("missing partition endpoint r = {0} in the radius set")]
    MissingEndpoint(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
