use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("{op}: dimension mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{op}: invalid parameter: {detail}")]
    Param { op: &'static str, detail: String },

    #[error("{op}: invalid configuration: {detail}")]
    Config { op: &'static str, detail: String },

    #[error("{op}: produced a non-finite value at flat index {index}")]
    NonFinite { op: &'static str, index: usize },

    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T, E = NumericsError> = std::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> NumericsError {
    NumericsError::Shape {
        op,
        detail: detail.into(),
    }
}

pub(crate) fn param_err(op: &'static str, detail: impl Into<String>) -> NumericsError {
    NumericsError::Param {
        op,
        detail: detail.into(),
    }
}
