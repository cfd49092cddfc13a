use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} trailing bytes after last entry")]
    TrailingBytes(usize),
    #[error("bad magic: expected {expected:?}")]
    MagicMismatch { expected: &'static str },
    #[error("duplicate parameter name {0:?}")]
    DuplicateName(String),
    #[error("payload size mismatch for {name:?}: dims imply {expected} values, found {found}")]
    PayloadSizeMismatch {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("channel mismatch: expected {expected}, found {found}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("angle undefined for a zero-length vector")]
    UndefinedAngle,
    #[error("degenerate point configuration (rank deficient)")]
    RankDeficient,
    #[error("point maps to infinity under the homography")]
    PointAtInfinity,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("loss became non-finite at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
    #[error("invalid configuration: {0}")]
    Config(String),
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
}
