use thiserror::Error;

use crate::harness::ConfigError;
use crate::linalg::LinalgError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error("{context}: expected shape {expected:?}, got {actual:?}")]
    Shape {
        context: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("target class {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },

    #[error("probability row {row} sums to {sum}, expected 1")]
    InvalidProbabilities { row: usize, sum: f64 },

    #[error("forward cache does not match the network: {0}")]
    CacheMismatch(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("Fisher refresh of layer {layer} failed: {source}")]
    LayerRefresh {
        layer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("refresh changed the layer output by {change:e} (limit {limit:e})")]
    RefreshInconsistency { change: f64, limit: f64 },

    #[error("invalid optimizer setup: {0}")]
    Optimizer(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("IDX format error in {file}: {message}")]
    IdxFormat { file: String, message: String },

    #[error("IDX files disagree: {images} images but {labels} labels")]
    IdxConsistency { images: usize, labels: usize },

    #[error("IDX file {file} truncated: expected {expected} bytes, found {actual}")]
    IdxLength {
        file: String,
        expected: usize,
        actual: usize,
    },

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("run '{run}' failed: {source}")]
    Run {
        run: String,
        #[source]
        source: Box<Error>,
    },

    #[error("usage: {0}")]
    Usage(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
