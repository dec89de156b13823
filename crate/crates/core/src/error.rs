use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A file or text payload could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// Dimensions of weights, inputs or labels do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// Forced facts reference unknown neurons or contradict each other.
    #[error("invalid forced facts: {0}")]
    InvalidFacts(String),

    /// Split count for quantitative runs must be a power of two.
    #[error("split count must be a power of two, got {0}")]
    InvalidK(usize),

    /// A box with a zero-width dimension has no volume to compare against.
    #[error("degenerate box: {0}")]
    DegenerateBox(String),

    /// Exact verification is capped to keep pattern enumeration tractable.
    #[error("network too large for exact verification: {relus} ReLU neurons (cap {cap})")]
    TooLarge { relus: usize, cap: usize },

    /// An LP solve failed numerically where a definite answer was required.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
