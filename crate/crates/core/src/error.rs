use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum UdotError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid hamiltonian: {0}")]
    InvalidHamiltonian(String),

    #[error("non-finite point passed to projection")]
    InvalidPoint,

    #[error("conjugate gradients stopped after {iterations} iterations at relative residual {residual:e}")]
    ConvergenceFailure { iterations: usize, residual: f64 },

    #[error("total masses differ ({m0} vs {m1}) but the hamiltonian conserves mass")]
    InfeasibleMassBalance { m0: f64, m1: f64 },

    #[error("trajectory left the domain at t = {t}, x = {x:?}")]
    ExitsDomain { t: f64, x: Vec<f64> },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, UdotError>;
