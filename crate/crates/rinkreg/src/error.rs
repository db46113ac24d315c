//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A linear system or homography is rank-deficient / singular.
    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    /// A point maps to (or past) the line at infinity.
    #[error("point at infinity: homogeneous w = {0}")]
    Horizon(f64),

    /// Randomization ranges permit invariant-violating geometry.
    #[error("invalid randomization ranges: {0}")]
    Range(String),

    /// Raster dimensions do not match.
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    Dimension(u32, u32, u32, u32),

    /// Predictions are missing for manifest entries.
    #[error("missing predictions for ids: {}", .0.join(", "))]
    MissingPrediction(Vec<String>),

    /// The initial estimator found no usable alignment.
    #[error("initial estimation failed: best overlap {0:.3} below floor")]
    InitFailed(f64),

    /// A run configuration file is malformed or contradicts the flags.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
