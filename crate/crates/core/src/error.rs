use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the segmentation engine and the evaluation harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("expected {expected} channels, got {actual}")]
    ChannelMismatch { expected: u8, actual: u8 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("sample {value} out of range [{min}, {max}]")]
    Range { value: f64, min: f64, max: f64 },

    #[error("degenerate variance: map is constant")]
    DegenerateVariance,

    #[error("degenerate data: fewer than 2 distinct points")]
    DegenerateData,

    #[error("degenerate reference: ground truth covers none or all of the image")]
    DegenerateReference,

    #[error("degenerate ground truth: {0}")]
    DegenerateGt(&'static str),

    #[error("degenerate mask: no boundary pixels")]
    DegenerateMask,

    #[error("empty mask: segmentation produced no foreground")]
    EmptyMask,

    #[error("insufficient data: need at least 2 values, got {0}")]
    InsufficientData(usize),

    #[error("coefficient of variation undefined for zero mean")]
    UndefinedCv,

    #[error("manifest {path}: row {row}: {message}")]
    Manifest {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("all {0} images were unsegmentable")]
    NothingSegmented(usize),
}

impl Error {
    /// True for errors that mean "this image has no segmentable structure",
    /// as opposed to I/O or configuration failures.
    pub fn is_unsegmentable(&self) -> bool {
        matches!(
            self,
            Error::DegenerateVariance | Error::DegenerateData | Error::EmptyMask
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
