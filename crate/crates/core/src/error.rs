use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },

    #[error("soft-state assumption fails: {0}")]
    SoftState(String),

    #[error("arity mismatch: expected {expected}, got {actual}")]
    ArityMismatch { expected: usize, actual: usize },

    #[error("state space of {states} assignments exceeds the exact cap of {cap}; use Monte Carlo")]
    StateCapExceeded { states: u128, cap: u128 },

    #[error("every one of {samples} importance samples had weight zero (log Z upper 95% bound {log_upper_95})")]
    AllSamplesZero { samples: usize, log_upper_95: f64 },

    #[error("partition function is zero on a sampled instance")]
    ZeroPartition,

    #[error("matrix is not symmetric (max deviation {0:e})")]
    Asymmetric(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("array with {entries} entries exceeds the dense cap of {cap}")]
    ArrayTooLarge { entries: u128, cap: usize },

    #[error("exact expectation needs a finite-support edge law")]
    UnsupportedExact,

    #[error("kernel entry ({0}, {1}) is not 0 or 1")]
    NonBinaryKernel(usize, usize),

    #[error("invalid interpolation point: {0}")]
    InvalidInterpolation(String),

    #[error("model is not certified: {0}")]
    NotCertified(String),

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}
