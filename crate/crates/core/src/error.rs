use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("non-finite density value {value} at x = {x}")]
    NonFiniteDensity { x: f64, value: f64 },

    #[error("projected mass {0} exceeds 1 + 1e-9")]
    ExcessMass(f64),

    #[error("negative cell mass {mass:e} in cell {cell}")]
    NegativeMass { cell: usize, mass: f64 },

    #[error("means differ: {0} vs {1}")]
    UnequalMeans(f64, f64),

    #[error("population size {0} is odd: N must be even")]
    OddPopulation(usize),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
