//! Crate-wide error type.

use thiserror::Error;

/// Unified error for all pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    /// Grid construction or use with a non-positive dimension or spacing.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// Two grids were required to be identical but differ.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// World-extent intersection of grids is empty along some axis.
    #[error("grids share no world overlap on axis {axis}")]
    NoOverlap { axis: usize },

    /// Tensor or volume shape incompatible with the requested operation.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A probability/rate parameter outside its valid range.
    #[error("invalid rate: {0}")]
    InvalidRate(String),

    /// Malformed configuration (network, training, HPO, experiment).
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Shape inference failed at a named graph node.
    #[error("shape inference failed at node `{node}`: {reason}")]
    ShapeInference { node: String, reason: String },

    /// Surface extraction on an empty mask.
    #[error("mask has no foreground voxels; surface is undefined")]
    EmptySurface,

    /// A metric is undefined for the given inputs.
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    /// Region partition on a reference with too small a foreground extent.
    #[error("foreground spans {extent} slice(s); at least 3 required for apex/mid/base")]
    DegeneratePartition { extent: usize },

    /// Statistical test undefined (e.g. all paired differences are zero).
    #[error("test undefined: {0}")]
    UndefinedTest(String),

    /// Majority vote over an even number of masks.
    #[error("majority vote requires an odd number of masks, got {0}")]
    EvenVoteCount(usize),

    /// An operation received an empty input collection.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Non-finite loss or gradient during optimisation.
    #[error("non-finite value during training: {0}")]
    NonFinite(String),

    /// Checkpoint or volume file is inconsistent with its manifest.
    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
