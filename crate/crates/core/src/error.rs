use std::path::PathBuf;

use numcore::NumError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("sample {id}: expected {expected} bytes for {frames} frames, file has {actual}")]
    FrameCountMismatch { id: String, frames: usize, expected: usize, actual: usize },
    #[error("sample {0} appears in more than one split")]
    OverlappingSplits(String),
    #[error("sample {id} has class index {class_index} but only {num_classes} classes exist")]
    InvalidClassIndex { id: String, class_index: usize, num_classes: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint does not match architecture: {0}")]
    ShapeMismatch(String),
    #[error("non-finite values: {0}")]
    NonFinite(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    /// Numeric-core view of this error, for closures handed to
    /// [`numcore::grad_check`].
    pub fn into_num(self) -> NumError {
        match self {
            Error::Num(e) => e,
            other => NumError::Range(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
