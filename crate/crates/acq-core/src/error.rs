use thiserror::Error;

/// Errors produced by tree construction, prediction, allocation and the
/// file formats shared with the CLI.
#[derive(Debug, Error)]
pub enum AcqError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("negative cost {0} is not a valid label")]
    NegativeCost(f64),

    #[error("node {0} is not a leaf")]
    NotALeaf(usize),

    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),

    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("quota {0} outside [1, 200]")]
    QuotaOutOfRange(u32),

    #[error("infeasible instance: minimum usage {min_usage} exceeds capacity {capacity}")]
    Infeasible { min_usage: u64, capacity: u64 },

    #[error("metric undefined: {0}")]
    UndefinedSignal(&'static str),

    #[error("iteration budget exhausted in {0}")]
    MaxIterations(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("model was trained against tree {expected}, got tree {got}")]
    TreeMismatch { expected: String, got: String },
}

pub type Result<T> = std::result::Result<T, AcqError>;
