use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IndexError {
    /// An allocation would push accounted index memory past the configured cap.
    /// The structure is left exactly as it was before the failing step.
    #[error("memory cap of {cap} bytes exceeded ({current} bytes in use, {requested} more requested)")]
    CapExceeded { cap: u64, current: u64, requested: u64 },

    #[error("key {key} outside the index domain [{lo}, {hi})")]
    OutOfDomain { key: String, lo: String, hi: String },

    #[error("duplicate key {0} rejected: duplicates are disabled")]
    DuplicateKey(String),

    #[error("node cost is undefined before the first operation")]
    UndefinedCost,

    #[error("invalid index configuration: {0}")]
    InvalidConfig(String),

    #[error("input keys are not sorted ascending")]
    Unsorted,
}

impl IndexError {
    pub fn is_cap_exceeded(&self) -> bool {
        matches!(self, IndexError::CapExceeded { .. })
    }
}
