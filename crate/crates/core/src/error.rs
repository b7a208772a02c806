use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("unsupported image format for {}: {reason}", .path.display())]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("image has zero dimension ({width}x{height})")]
    ZeroDimension { width: usize, height: usize },

    #[error("invalid image data: {0}")]
    InvalidImage(String),

    #[error("gaussian sigma must be positive, got {0}")]
    NonPositiveSigma(f64),

    #[error("kernel of radius {radius} does not fit a {width}x{height} image")]
    KernelTooLarge {
        radius: usize,
        width: usize,
        height: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown config key `{key}`{}", .suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    UnknownConfigKey {
        key: String,
        suggestion: Option<String>,
    },

    #[error("point ({x}, {y}) is too close to the border for radius {radius}")]
    OutOfDomain { x: usize, y: usize, radius: usize },

    #[error("image {width}x{height} too small: need at least {needed} pixels per side")]
    ImageTooSmall {
        width: usize,
        height: usize,
        needed: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("not enough samples: have {have}, need {need}")]
    InsufficientSamples { have: usize, need: usize },

    #[error("data rank {rank} is below the requested {requested} components")]
    RankDeficient { rank: usize, requested: usize },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("empty descriptor set")]
    EmptyDescriptorSet,

    #[error("training data contains a single class")]
    SingleClass,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("need at least 2 specimens, found {0}")]
    TooFewSpecimens(usize),

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("failed to read {count} image(s): {}", .errors.join("; "))]
    ImageBatch { count: usize, errors: Vec<String> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::UnknownConfigKey { .. } => 2,
            Error::NonPositiveSigma(_)
            | Error::RankDeficient { .. }
            | Error::Degenerate(_)
            | Error::NonFinite(_)
            | Error::InsufficientSamples { .. }
            | Error::SingleClass => 4,
            _ => 3,
        }
    }
}
