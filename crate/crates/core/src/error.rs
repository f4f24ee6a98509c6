use thiserror::Error;

use crate::herding::HerdingTrace;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("value {value} outside the domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("Gram matrix of {design} is not positive definite (after jitter up to {max_jitter:e})")]
    Factorization { design: String, max_jitter: f64 },

    #[error("weight solve failed: {0}")]
    WeightSolve(String),

    #[error("candidate set is empty")]
    EmptyCandidates,

    #[error("iteration cap {cap} reached with {found} of {target} validation points")]
    IterationCap {
        cap: usize,
        found: usize,
        target: usize,
        partial: Box<HerdingTrace>,
    },

    #[error("evaluation table needs {needed} bytes, cap is {cap}")]
    MemoryCap { needed: usize, cap: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("empty index set: no multi-index satisfies the degree constraints")]
    EmptyIndexSet,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unknown schema version {0}")]
    SchemaVersion(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
