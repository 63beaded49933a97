//! Error types shared across the crate.

use thiserror::Error;

/// Errors from tensor construction and tape operations.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape {shape:?} implies {} elements but got {data_len}", shape.iter().product::<usize>())]
    ShapeDataMismatch { shape: Vec<usize>, data_len: usize },

    #[error("shape {shape:?} has a zero extent")]
    ZeroExtent { shape: Vec<usize> },

    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    DimensionMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: expected rank-{expected} tensor, got shape {shape:?}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },

    #[error("{op}: index {index} out of range for size {len}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },

    #[error("{op}: needs at least one input")]
    EmptyInput { op: &'static str },

    #[error("expected scalar, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },
}

/// Errors from model configuration and the forward pass.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("label {label} out of range for {what} with {cardinality} classes")]
    LabelOutOfRange {
        what: String,
        label: usize,
        cardinality: usize,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

/// Errors from dataset synthesis and manifest I/O.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid dataset spec: field `{field}`: {message}")]
    Spec { field: String, message: String },

    #[error("split error: {0}")]
    Split(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad image file: {message}")]
    Image { path: String, message: String },
}

/// Errors from training and evaluation.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("non-finite loss at epoch {epoch}, batch {batch} (term: {term})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        term: String,
    },

    #[error("invalid input: {0}")]
    Validation(String),
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Model(ModelError::Tensor(e))
    }
}
