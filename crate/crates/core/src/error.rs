use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used for process exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments, malformed files, violated preconditions on inputs.
    Input,
    /// The inputs were well-formed but the numerics failed.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("degrees of freedom {df} must exceed p - 1 = {}", *dim as f64 - 1.0)]
    DegenerateDf { df: f64, dim: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("empty matrix")]
    EmptyMatrix,

    #[error("need at least {needed} observations, got {actual}")]
    TooFewObservations { needed: usize, actual: usize },

    #[error("prior slack c must be positive, got {0}")]
    InvalidSlack(f64),

    #[error("source {index} has non-positive variance {value}")]
    ZeroVariance { index: usize, value: f64 },

    #[error("posterior is improper: nu = {nu} must exceed p - 1 = {}", *dim as f64 - 1.0)]
    ImproperPosterior { nu: f64, dim: usize },

    #[error("n = {0} is too small for the shrinkage weight (need n >= 3)")]
    DegenerateN(usize),

    #[error("number of simulations must be at least 1")]
    ZeroSims,

    #[error("need at least {needed} draws, got {actual}")]
    TooFewDraws { needed: usize, actual: usize },

    #[error("tail level {0} must lie in (0.5, 1)")]
    InvalidLevel(f64),

    #[error("returns have zero dispersion")]
    ZeroDispersion,

    #[error("optimizer did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),

    #[error("need at least 2 periods, got {0}")]
    InsufficientPeriods(usize),

    #[error("invalid portfolio weights: {0}")]
    InvalidWeights(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("duplicate date {0}")]
    DuplicateDate(String),

    #[error("file has no data rows")]
    EmptyFile,

    #[error("non-positive price {value} for source {source_label} on {date}")]
    NonPositivePrice {
        source_label: String,
        date: String,
        value: f64,
    },

    #[error("source {0} has missing values")]
    MissingValues(String),

    #[error("period {0} contains no rows")]
    EmptyPeriod(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NotPositiveDefinite { .. }
            | Error::ZeroDispersion
            | Error::NoConvergence { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Input,
        }
    }
}
