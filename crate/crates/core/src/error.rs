use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unknown element id `{0}`")]
    UnknownElement(String),

    #[error("element `{0}` is not placed")]
    Unplaced(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl LayoutError {
    /// Short machine-readable tag used by the CLI and the HTTP service.
    pub fn code(&self) -> &'static str {
        match self {
            LayoutError::Parse(_) => "parse",
            LayoutError::Validation(_) => "validation",
            LayoutError::UnknownElement(_) => "unknown_element",
            LayoutError::Unplaced(_) => "unplaced",
            LayoutError::Shape(_) => "shape",
            LayoutError::NonFinite(_) => "non_finite",
            LayoutError::OutOfRange(_) => "out_of_range",
            LayoutError::Empty(_) => "empty",
            LayoutError::Checkpoint(_) => "checkpoint",
            LayoutError::Io(_) => "io",
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, LayoutError::Io(_))
    }
}

impl From<serde_json::Error> for LayoutError {
    fn from(e: serde_json::Error) -> Self {
        LayoutError::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LayoutError>;
