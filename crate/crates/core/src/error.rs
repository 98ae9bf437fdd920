use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image dimensions {height}x{width}")]
    BadDimensions { height: usize, width: usize },

    #[error("scale {scale} shrinks {height}x{width} below one pixel")]
    DegenerateScale {
        scale: usize,
        height: usize,
        width: usize,
    },

    #[error(
        "upsample target {target_h}x{target_w} is smaller than source {source_h}x{source_w}"
    )]
    InvalidUpsampleTarget {
        source_h: usize,
        source_w: usize,
        target_h: usize,
        target_w: usize,
    },

    #[error("cost block needs {needed} bytes but the slice budget is {budget} bytes")]
    SliceBudget { needed: usize, budget: usize },

    #[error("match map contains unmatched entries")]
    IncompleteMatch,

    #[error("assignment oracle requires a square cost matrix, got {rows}x{cols}")]
    OracleDomain { rows: usize, cols: usize },

    #[error("{0}")]
    Config(String),

    #[error("png: {0}")]
    Png(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
