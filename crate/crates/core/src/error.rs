use thiserror::Error;

/// Errors produced by the controls, model, subproblem solvers and driver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("levels must be strictly ascending with at least two entries, got {0:?}")]
    InvalidLevels(Vec<i64>),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: String, right: String },

    #[error("value {value} in cell {cell} is not one of the admissible levels")]
    Infeasible { cell: usize, value: i64 },

    #[error("refinement factor must be at least 1")]
    InvalidRefinement,

    #[error("invalid model configuration: {0}")]
    InvalidModel(String),

    #[error("{cells} cells cannot be broadcast onto the {finest}-cell quadrature grid")]
    Incompatible { cells: usize, finest: usize },

    #[error("point {t} lies outside the domain [{t0}, {tf}]")]
    OutsideDomain { t: f64, t0: f64, tf: f64 },

    #[error("invalid subproblem: {0}")]
    InvalidSubproblem(String),

    #[error("enumeration of {count} candidates exceeds the limit of {limit}")]
    TooLarge { count: u128, limit: u128 },

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite {what} at outer iteration {iteration}")]
    NonFinite { what: &'static str, iteration: usize },

    #[error("csv output failed: {0}")]
    Csv(String),
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Csv(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
