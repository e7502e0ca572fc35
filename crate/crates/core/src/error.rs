use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("path does not exist: {}", .0.display())]
    MissingPath(PathBuf),

    #[error("class `{0}` is assigned to more than one split")]
    OverlappingSplitClasses(String),

    #[error("class folder `{0}` contains no images")]
    EmptyClass(String),

    #[error("cannot decode image {}: {reason}", .path.display())]
    UndecodableImage { path: PathBuf, reason: String },

    #[error("split has {have} classes, episode needs {need}")]
    InsufficientClasses { need: usize, have: usize },

    #[error("class {class} has {have} samples, episode needs {need}")]
    InsufficientSamples { class: usize, need: usize, have: usize },

    #[error("augmentation policy incompatible with sample shape {shape:?}: {reason}")]
    IncompatiblePolicy { shape: Vec<usize>, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("cosine similarity of a zero vector")]
    ZeroVector,

    #[error("label {label} out of range for {n_way} classes")]
    LabelOutOfRange { label: usize, n_way: usize },

    #[error("expected {expected} samples for class {class}, found {found}")]
    LabelCount { class: usize, expected: usize, found: usize },

    #[error("alpha must lie in [0, 1], got {0}")]
    AlphaOutOfRange(f64),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("non-finite {term} loss at step {step}")]
    NonFiniteLoss { term: &'static str, step: u64 },

    #[error("no cache entry for episode {0}")]
    UnknownEpisode(u64),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
