use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The blanket rate reached 1, so the shuffled messages carry no signal.
    #[error("estimator undefined: {0}")]
    EstimatorUndefined(String),

    #[error("malformed transcript: {0}")]
    MalformedTranscript(String),

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("capacity exceeded: schedule needs shuffler {level} but only {k} exist")]
    CapacityExceeded { level: usize, k: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("config: {0}")]
    Config(String),

    #[error("fit undefined: {0}")]
    FitUndefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
