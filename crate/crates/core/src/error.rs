use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank { op: &'static str, expected: usize, shape: Vec<usize> },
    #[error("shape {shape:?} does not match data length {len}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("shape {shape:?} has a zero-sized dimension")]
    EmptyDimension { shape: Vec<usize> },
    #[error("{op}: non-finite input")]
    NonFinite { op: &'static str },
    #[error("contract violated: {0}")]
    Contract(&'static str),
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        TensorError::Shape { op, left: left.to_vec(), right: right.to_vec() }
    }
}

/// Failure while parsing a byte stream (codec bitstream, container or
/// checkpoint). `offset` is the byte position where parsing stopped.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{what} at byte {offset}: {reason}")]
pub struct DecodeError {
    pub what: &'static str,
    pub offset: usize,
    pub reason: String,
}

impl DecodeError {
    pub(crate) fn new(what: &'static str, offset: usize, reason: impl Into<String>) -> Self {
        Self { what, offset, reason: reason.into() }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("invalid image: {0}")]
    Image(String),
    #[error("invalid mask: {0}")]
    Mask(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model mismatch: {0}")]
    ModelMismatch(String),
    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    NonFiniteLoss { epoch: usize, step: usize, loss: f64 },
    #[error("no feasible configuration: budget allows {budget_bpp:.4} bpp, cheapest calibration point needs {min_bits} bits")]
    InfeasibleBudget { budget_bpp: f64, min_bits: u64 },
    #[error("{path}: {reason}")]
    File { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
