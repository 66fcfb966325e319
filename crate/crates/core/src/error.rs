use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dimensions {width}x{height}: {reason}")]
    InvalidDimensions {
        width: usize,
        height: usize,
        reason: String,
    },
    #[error("invalid box ({x0},{y0},{x1},{y1}): must satisfy x0 < x1 and y0 < y1")]
    InvalidBox { x0: i64, y0: i64, x1: i64, y1: i64 },
    #[error("instance not found: id {0}")]
    InstanceNotFound(u32),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid quantization scheme: {0}")]
    InvalidScheme(String),
    #[error("one-hot violated at pixel ({x},{y}): {active} planes set")]
    OneHotViolation { x: usize, y: usize, active: usize },
    #[error("window mask is not the crop of the full mask: {0}")]
    InconsistentWindow(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("ground-truth set is empty")]
    EmptyGroundTruth,
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
