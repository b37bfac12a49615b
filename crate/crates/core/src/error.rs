use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("category {category} is not supported: {reason}")]
    UnsupportedCategory { category: usize, reason: String },

    #[error("index {index} out of range for {what} of size {size}")]
    OutOfRange { what: &'static str, index: usize, size: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("malformed data: {0}")]
    Data(String),

    #[error("no gradient for trainable tensor `{0}`")]
    MissingGradient(String),

    #[error("gradient check requires a scalar output, got shape {rows}x{cols}")]
    NonScalarOutput { rows: usize, cols: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
