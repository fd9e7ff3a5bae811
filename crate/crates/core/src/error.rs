use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {0} is out of range for the fixed-point encoding")]
    EncodingOverflow(f64),

    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),

    #[error("scale mismatch between operands")]
    ScaleMismatch,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("framing error: {0}")]
    Framing(String),

    #[error("handshake failed: {0}")]
    Handshake(String),

    #[error("timed out: {0}")]
    Timeout(String),

    #[error("connection lost: {0}")]
    ConnectionLost(String),

    #[error("protocol desync: {0}")]
    Desync(String),

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("degenerate class: {0}")]
    DegenerateClass(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
