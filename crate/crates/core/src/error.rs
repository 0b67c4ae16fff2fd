use alloc::string::String;

/// Errors raised by the scoring engine.
///
/// Every variant is a domain error: the inputs violate a precondition of
/// the operation. Nothing here is transient.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("patch index {index} out of range (grid has {count} patches)")]
    PatchIndexOutOfRange { index: usize, count: usize },

    #[error(
        "invalid patch grid: grid side {grid_side} must be >= 1 and divide input side {input_side}"
    )]
    InvalidGrid { grid_side: u32, input_side: u32 },

    #[error("{what} must be positive and finite, got {value}")]
    NonPositive { what: &'static str, value: f64 },

    #[error("invalid bounding box [{x1}, {y1}, {x2}, {y2}]")]
    InvalidBBox { x1: f64, y1: f64, x2: f64, y2: f64 },

    #[error("embedding dimension mismatch: query d={query}, page d={page}")]
    DimensionMismatch { query: usize, page: usize },

    #[error("embedding shape mismatch for {id}: expected {expected} values, got {actual}")]
    ShapeMismatch {
        id: String,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in embedding {id}")]
    NonFinite { id: String },

    #[error("region has no scoring support (no covered patches)")]
    EmptyCoverage,

    #[error("corpus index is empty")]
    EmptyIndex,

    #[error("no regions selected")]
    EmptySelection,

    #[error("no samples to evaluate")]
    EmptySamples,

    #[error("zero token baseline")]
    ZeroBaseline,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
