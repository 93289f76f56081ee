use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range for {what} of size {len}")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{algorithm} did not converge after {sweeps} sweeps")]
    Convergence {
        algorithm: &'static str,
        sweeps: usize,
    },

    #[error("matrix is not positive definite (pivot {pivot} at {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("kernel is not positive semidefinite (eigenvalue {eigenvalue})")]
    PsdViolation { eigenvalue: f64 },

    #[error("cannot select {size} items: kernel has numerical rank {rank}")]
    InfeasibleSize { size: usize, rank: usize },

    #[error("bandwidth is degenerate: {0}")]
    DegenerateBandwidth(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "budget of {budget_bytes} bytes is infeasible; \
         the smallest archive needs {minimal_budget} bytes including the model"
    )]
    InfeasibleBudget {
        budget_bytes: u64,
        minimal_budget: u64,
    },

    #[error("item id mismatch: {0}")]
    IdMismatch(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("truncated input while reading {0}")]
    Truncated(&'static str),

    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),

    #[error("declared length {declared} does not match {actual}")]
    LengthMismatch { declared: u64, actual: u64 },

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("corrupt data: {0}")]
    Corrupt(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors that mean a file was damaged or malformed, as opposed
    /// to bad arguments or I/O failures.
    pub fn is_integrity(&self) -> bool {
        matches!(
            self,
            Error::BadMagic { .. }
                | Error::VersionMismatch { .. }
                | Error::Truncated(_)
                | Error::UnknownDtype(_)
                | Error::LengthMismatch { .. }
                | Error::Integrity(_)
                | Error::Corrupt(_)
        )
    }
}
