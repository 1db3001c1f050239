use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix must be square: row {row} has {len} entries, expected {expected}")]
    Shape {
        row: usize,
        len: usize,
        expected: usize,
    },

    #[error("invalid transition matrix: {0}")]
    InvalidMatrix(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("structure error: {0}")]
    Structure(String),

    #[error("n = {n} exceeds the enumeration cap of {cap}")]
    Capacity { n: usize, cap: usize },

    /// The block budget ran out before a success. Not a sample.
    #[error("block budget exhausted after {blocks_examined} blocks (t = {time})")]
    Budget {
        blocks_examined: u64,
        conditioning_blocks: u64,
        time: u64,
    },

    #[error("ensemble source ended at t = {time}")]
    SourceExhausted { time: u64 },

    #[error(
        "expected count {expected:.3} in cell `{category}` is below {minimum}; merge cells first"
    )]
    CellMergeRequired {
        category: String,
        expected: f64,
        minimum: f64,
    },

    #[error("oracle mismatch: {0}")]
    OracleMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),
}
