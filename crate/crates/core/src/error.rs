//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by dataset construction, likelihood evaluation, chain
/// kernels, consensus combination, and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of inputs do not agree (coefficient length vs. design width,
    /// row ranges out of bounds, draw matrices of unequal shape).
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A dataset violates its construction invariants.
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    /// An invalid configuration value (chain lengths, subsample sizes,
    /// partition counts, proposal settings).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A non-finite intermediate was detected during likelihood evaluation.
    #[error("non-finite value at row {row} during {context}")]
    NonFinite { row: usize, context: &'static str },

    /// A covariance matrix is not symmetric positive definite.
    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    /// Both outcome classes are required but only one is present.
    #[error("degenerate outcomes: {0}")]
    DegenerateOutcome(String),

    /// The chain could not be started (non-finite posterior at the initial
    /// state).
    #[error("chain initialization failed: {0}")]
    Initialization(String),

    /// Effective sample size is undefined for the given draws.
    #[error("effective sample size undefined: {0}")]
    EssUndefined(String),

    /// A numerical failure outside row-indexed likelihood evaluation.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Too few draws for the requested estimate.
    #[error("insufficient draws: {0}")]
    InsufficientDraws(String),

    /// A consensus partition chain failed.
    #[error("partition {partition} failed: {source}")]
    Partition {
        partition: usize,
        #[source]
        source: Box<Error>,
    },

    /// Draw combination failed (shape or weight problems).
    #[error("combination failed: {0}")]
    Combination(String),

    /// Dataset ingestion failed.
    #[error("ingestion failed: {0}")]
    Ingestion(String),

    /// A schema file or schema definition is invalid.
    #[error("schema error: {0}")]
    Schema(String),

    /// Synthetic data generation failed.
    #[error("generation failed: {0}")]
    Generation(String),

    /// A chain or metadata file is malformed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Benchmark timing could not be trusted.
    #[error("benchmark error: {0}")]
    Benchmark(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
