use thiserror::Error;

use crate::expr::{EvalError, ParseError};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("chart mismatch: {0}")]
    ChartMismatch(String),
    #[error("rank mismatch: expected {expected}, found {found}")]
    RankMismatch { expected: usize, found: usize },
    #[error("degree mismatch: {0}")]
    DegreeMismatch(String),
    #[error("invalid chart: {0}")]
    InvalidChart(String),
    #[error("invalid index: {0}")]
    InvalidIndex(String),
    #[error("singular {what} at point {point:?}")]
    Singular { what: String, point: Vec<f64> },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("kernel dimension changed from {from} to {to} at {point:?}")]
    KernelDimensionChanged {
        from: usize,
        to: usize,
        point: Vec<f64>,
    },
    #[error("point {point:?} left the chart domain")]
    OutOfDomain { point: Vec<f64> },
    #[error("{0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
