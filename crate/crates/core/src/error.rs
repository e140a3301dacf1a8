use std::path::PathBuf;

use thiserror::Error;

use crate::edmd::RankReport;

pub type Result<T> = std::result::Result<T, Error>;

/// Which data matrix of a snapshot pair a failure refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSide {
    X,
    Y,
}

impl std::fmt::Display for DataSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DataSide::X => f.write_str("D(X)"),
            DataSide::Y => f.write_str("D(Y)"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite dictionary value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid basis transform: reciprocal condition number {rcond:e} below {threshold:e}")]
    InvalidTransform { rcond: f64, threshold: f64 },

    #[error(
        "full column rank assumption violated for {side}: numerical rank {} of {} columns",
        report.numerical_rank,
        report.singular_values.len()
    )]
    RankDeficient { side: DataSide, report: RankReport },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("degenerate function: |D(Y)v| = {norm:e} is below {threshold:e}")]
    DegenerateFunction { norm: f64, threshold: f64 },

    #[error("N = {n} exceeds the projection size guard {guard}; use the consistency index instead")]
    TooLarge { n: usize, guard: usize },

    #[error("non-finite state in trajectory {trajectory} at step {step}")]
    Simulation { trajectory: usize, step: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
