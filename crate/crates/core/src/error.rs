use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The point handed to a metric projection lies outside the tube where
    /// the nearest point is unique.
    #[error("tube violation: {0}")]
    TubeViolation(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("enumeration budget exceeded: {required} leaf evaluations required, budget is {budget}")]
    Budget { required: f64, budget: u64 },

    /// A retraction failed mid-path; carries the state the step started from.
    #[error("step {step} failed at {state:?}: {reason}")]
    StepFailure {
        step: usize,
        state: Vec<f64>,
        reason: String,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("configuration error: {0}")]
    Configuration(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }

    pub(crate) fn tube(msg: impl Into<String>) -> Self {
        Error::TubeViolation(msg.into())
    }
}
