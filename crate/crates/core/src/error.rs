use crate::tensor::Shape;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}: input is empty")]
    Empty(&'static str),

    #[error("not a model file (bad magic bytes)")]
    NotAModelFile,

    #[error("unsupported model format version {found} (this build reads version {expected})")]
    VersionMismatch { expected: u16, found: u16 },

    #[error("model file integrity error: {0}")]
    Integrity(String),

    #[error("model file truncated: {0}")]
    Truncated(String),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("malformed image header: {0}")]
    MalformedHeader(String),

    #[error("truncated image payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("training diverged in stage {stage} at epoch {epoch}: loss is {loss}")]
    Diverged { stage: u8, epoch: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: Shape, right: Shape) -> Self {
        Error::ShapeMismatch { op, left, right }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
