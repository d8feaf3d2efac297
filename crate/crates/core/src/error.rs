use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("density must be strictly positive, found {value} in cell {cell}")]
    NonPositiveDensity { cell: usize, value: f64 },

    #[error(transparent)]
    Solver(#[from] SolverError),

    #[error("equilibrium: {0}")]
    Equilibrium(String),

    #[error("analysis: {0}")]
    Analysis(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("step rejected: density {value} in cell {cell} is at or below the positivity floor")]
    PositivityViolation { cell: usize, value: f64 },

    #[error("time step underflow at t = {t}: dt = {dt} fell below {limit}")]
    StepUnderflow { t: f64, dt: f64, limit: f64 },

    #[error("free energy increased at t = {t}: {before} -> {after}")]
    EnergyIncrease { t: f64, before: f64, after: f64 },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}
