use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("embedding matrices have mismatched shapes: u is {u_rows}x{u_cols}, v is {v_rows}x{v_cols}")]
    ShapeMismatch {
        u_rows: usize,
        u_cols: usize,
        v_rows: usize,
        v_cols: usize,
    },
    #[error("column {column} of {side} has norm {norm}, expected 1")]
    NotUnitNorm {
        side: &'static str,
        column: usize,
        norm: f64,
    },
    #[error("embedding has no columns")]
    EmptyEmbedding,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("batch size {0} is below the minimum of 2")]
    BatchTooSmall(usize),
    #[error("batch index {index} is out of range for {n} pairs")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("batch index {0} appears more than once")]
    DuplicateIndex(usize),
    #[error("batch collection is empty")]
    EmptyCollection,
    #[error("batches have unequal sizes ({0} and {1})")]
    UnequalBatchSizes(usize, usize),
    #[error("batches do not form a partition of 0..{0}")]
    NotAPartition(usize),
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("invalid affinity graph: {0}")]
    InvalidAffinity(String),
    #[error("pair weight needs distinct nodes, got k = l = {0}")]
    SelfPair(usize),
    #[error("{what} count {count} exceeds the cap of {cap}")]
    CapExceeded {
        what: &'static str,
        count: u128,
        cap: u128,
    },
    #[error("{n} is not divisible by {divisor}")]
    NotDivisible { n: usize, divisor: usize },
    #[error("infeasible configuration: {0}")]
    Infeasible(String),
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("toy parameter theta[{index}] = {value} left (0, pi/2) at step {step}")]
    ToyLeftDomain {
        index: usize,
        value: f64,
        step: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
