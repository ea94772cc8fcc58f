use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes incompatible with the requested operation.
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// Softmax or attention over a neighborhood with no active entries.
    #[error("empty neighborhood: {0}")]
    EmptyNeighborhood(String),

    /// API misuse (non-scalar backward root, empty metric input, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// Could not place vehicles without violating spacing constraints.
    #[error("placement error: {0}")]
    Placement(String),

    /// Vehicle has no usable route.
    #[error("routing error: {0}")]
    Routing(String),

    /// Not enough recorded history to cut a sample window.
    #[error("windowing error: {0}")]
    Windowing(String),

    /// Too few neighbor vehicles in observation range.
    #[error("selection error: {0}")]
    Selection(String),

    /// Dataset file failed checksum or format validation.
    #[error("corrupt dataset: {0}")]
    CorruptDataset(String),

    /// Run configuration rejected.
    #[error("config error: {0}")]
    Config(String),

    /// A required pre-trained stage or artifact is missing.
    #[error("staging error: {0}")]
    Staging(String),

    /// Training diverged (NaN/Inf loss).
    #[error("training error: {0}")]
    Training(String),

    /// Baseline error rate is zero in some condition; mCE undefined.
    #[error("normalization error: {0}")]
    Normalization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
