use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm is zero or below the normalization guard")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("non-finite value at position {0}")]
    NonFinite(usize),

    #[error("invalid synthetic data spec: {0}")]
    BadSpec(String),

    #[error("image {image} has an empty masked set")]
    EmptyMask { image: usize },

    #[error("embedding {index} is not unit-norm (norm = {norm})")]
    NotNormalized { index: usize, norm: f64 },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("reference database is empty")]
    EmptyDatabase,

    #[error("k = {k} exceeds the {n} records in the database")]
    KTooLarge { k: usize, n: usize },

    #[error("unknown record id {0:?}")]
    UnknownId(String),

    #[error("duplicate record id {0:?}")]
    DuplicateId(String),

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("unsupported file version {found:?}")]
    VersionMismatch { found: String },

    #[error("no positive pairs in the scored set")]
    NoPositives,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("cannot split {items} items into {folds} folds")]
    TooFewItems { items: usize, folds: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
