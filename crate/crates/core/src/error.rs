use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the identification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(PathBuf),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("mask selects no pixels")]
    EmptyMask,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("need {required} distinct pixels for {k} components, found {found}")]
    TooFewDistinct {
        k: usize,
        required: usize,
        found: usize,
    },

    #[error("empty pixel set")]
    EmptyData,

    #[error("covariance is not positive definite")]
    SingularCovariance,

    #[error("no slice region reaches {min_pixels} pixels")]
    NoSlices { min_pixels: usize },

    #[error("image too small for scale space: {width}x{height}, need at least {min}")]
    ImageTooSmall { width: usize, height: usize, min: usize },

    #[error("mass vector has no positive element")]
    ZeroMass,

    #[error("total conflict: combined masses share no support")]
    TotalConflict,

    #[error("subset {subset:#b} lies outside a frame of {frame} hypotheses")]
    OutsideFrame { subset: u32, frame: usize },

    #[error("belief map is inconsistent: recovered mass {mass} for subset {subset:#b}")]
    InconsistentBelief { subset: u32, mass: f64 },

    #[error("no feature sets to fuse")]
    NoFeatures,

    #[error("empty gallery")]
    EmptyGallery,

    #[error("empty score list")]
    EmptyScores,

    #[error("unknown subject: {0}")]
    UnknownSubject(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("parse error in {context}: {reason}")]
    Parse { context: String, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn dims(expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
