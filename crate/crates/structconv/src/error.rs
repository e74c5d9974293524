//! Crate-wide error type.
//!
//! All indices in error payloads are 0-based, matching the in-memory and
//! on-disk conventions used everywhere else in the crate.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // graph
    #[error("adjacency matrix is not square: {rows} rows, row {row} has {cols} columns")]
    NonSquare { rows: usize, row: usize, cols: usize },
    #[error("adjacency matrix is asymmetric at ({i}, {j})")]
    Asymmetric { i: usize, j: usize },
    #[error("adjacency entry ({i}, {j}) is negative")]
    NegativeEntry { i: usize, j: usize },
    #[error("index {index} out of range (length {len})")]
    IndexOutOfRange { index: usize, len: usize },

    // tensor
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    // layers
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },
    #[error("input has {t_len} time steps but the kernel needs at least {needed}")]
    TemporalTooShort { t_len: usize, needed: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("bad pool length {p} for input of {t_len} time steps")]
    BadPoolLength { p: usize, t_len: usize },

    // models
    #[error("shape check failed at layer {layer}: {context}")]
    ShapeCheckFailed { layer: usize, context: String },
    #[error("stale forward cache: {context}")]
    StaleCache { context: String },
    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("checkpoint fingerprint mismatch")]
    FingerprintMismatch,
    #[error("checkpoint truncated or malformed: {context}")]
    TruncatedFile { context: String },
    #[error("checkpoint checksum mismatch")]
    ChecksumMismatch,
    #[error("masked weight position is nonzero: {context}")]
    MaskViolation { context: String },

    // optim
    #[error("dataset is empty")]
    EmptyDataset,

    // data
    #[error("parse error at line {row}, column {col}: {message}")]
    ParseError { row: usize, col: usize, message: String },
    #[error("line {row} has {got} fields, expected {expected}")]
    RaggedRow { row: usize, got: usize, expected: usize },
    #[error("file has no data rows")]
    EmptyFile,
    #[error("series too short: {t_len} time steps, need at least {needed}")]
    TooShort { t_len: usize, needed: usize },
    #[error("split fractions invalid: {context}")]
    BadSplit { context: String },
    #[error("feature {index} is constant in the training split")]
    ConstantFeature { index: usize },
    #[error("coupling must lie in [0, 1), got {rho}")]
    BadCoupling { rho: f64 },
    #[error("graph is disconnected: node {node} unreachable from node 0")]
    DisconnectedGraph { node: usize },

    // analysis
    #[error("ragged input: vector {index} has length {got}, expected {expected}")]
    RaggedInput { index: usize, got: usize, expected: usize },

    // cli / config
    #[error("config error for key `{key}`: {message}")]
    ConfigError { key: String, message: String },
    #[error("missing file: {path}")]
    MissingFile { path: PathBuf },
    #[error("checkpoint does not match config: {context}")]
    CheckpointMismatch { context: String },
    #[error("output directory is locked by another run: {path}")]
    OutputLocked { path: PathBuf },
    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 1 for validation problems (bad input, bad config,
    /// mismatched files), 2 for runtime failures (I/O and internal errors).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::StaleCache { .. } => 2,
            _ => 1,
        }
    }
}
