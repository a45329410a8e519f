use alloc::string::String;

/// Errors raised by the core pipeline stages.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left_rows}x{left_cols} and {right_rows}x{right_cols}")]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("data length {len} does not match {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("frame value {value} at index {index} outside [0, 1]")]
    FrameValue { index: usize, value: f64 },
    #[error("cosine similarity undefined for a zero vector")]
    ZeroVector,
    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("similarity source {0} requires precomputed features")]
    MissingFeatures(&'static str),
    #[error("similarity source {0} requires raw frames")]
    MissingFrames(&'static str),
    #[error("need at least two frames to score adjacent pairs, got {0}")]
    TooFewFrames(usize),
    #[error("cannot split {frames} frames into {events} events")]
    TooManyEvents { frames: usize, events: usize },
    #[error("invalid boundary {boundary} for {frames} frames")]
    InvalidBoundary { boundary: usize, frames: usize },
    #[error("uniform sampling over [{start}, {end}] with {count} samples")]
    InvalidSampleRange { start: usize, end: usize, count: usize },
    #[error("average split point rounds to zero frames")]
    DegenerateAverage,
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("{tokens} tokens cannot tile a {height}x{width} frame")]
    InvalidPatchCount { tokens: usize, height: usize, width: usize },
    #[error("target class {target} out of range for {classes} classes")]
    InvalidTarget { target: usize, classes: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = core::result::Result<T, Error>;
