use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumError {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error("index out of range: {0}")]
    Index(String),
}

impl NumError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        NumError::Shape { op, detail: detail.into() }
    }
}

pub type Result<T> = std::result::Result<T, NumError>;
