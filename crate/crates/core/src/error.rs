use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("test manifest not found at {0}")]
    MissingManifest(PathBuf),
    #[error("malformed manifest {path} line {line}: {reason}")]
    Manifest {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("class `{0}` named in the manifest has no training directory")]
    UnknownClass(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("image {width}x{height} is smaller than {min_width}x{min_height}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min_width: usize,
        min_height: usize,
    },
    #[error("no grid is large enough for a {0}x{0} cell window")]
    NoUsableGrid(usize),
    #[error("degenerate training set: {0}")]
    Degenerate(String),
    #[error("class `{0}` has no positive training examples")]
    NoPositives(String),
    #[error("feature length {got} does not match the model's {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("split needs {needed} test images but only {available} exist")]
    SplitTooLarge { needed: usize, available: usize },
    #[error("too few descriptors for the vocabulary: {got} < {needed}")]
    TooFewDescriptors { got: usize, needed: usize },
    #[error("ocr adapter unavailable: {0}")]
    OcrUnavailable(String),
    #[error("bad artifact format: {0}")]
    Format(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
