use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected dim={expected}, got dim={got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point has no coordinates")]
    ZeroDimension,

    #[error("non-finite coordinate {value} at position {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("empty point set: {0}")]
    Empty(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "instance of {n} points exceeds the exact limit of {limit} for k={k}; use {fallback} instead"
    )]
    OverExactLimit {
        n: usize,
        k: usize,
        limit: usize,
        fallback: &'static str,
    },

    #[error("index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("index {0} appears more than once in the ordering")]
    RepeatedIndex(usize),

    #[error("sequence generation overflowed after {achieved} points (requested {requested})")]
    Overflow { achieved: usize, requested: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
