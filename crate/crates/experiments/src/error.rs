use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Core(#[from] rsmf_core::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("assertion failed: {0}")]
    Assertion(String),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

impl ExperimentError {
    /// 0 success, 1 assertion or numerical failure, 2 usage or config, 3 budget.
    pub fn exit_code(&self) -> i32 {
        use rsmf_core::Error as E;
        match self {
            ExperimentError::Core(E::Budget { .. }) => 3,
            ExperimentError::Core(E::StepFailure { .. } | E::TubeViolation(_)) => 1,
            ExperimentError::Core(_) => 2,
            ExperimentError::Config(_) | ExperimentError::Json(_) => 2,
            ExperimentError::Io(_) | ExperimentError::Csv(_) => 2,
            ExperimentError::Assertion(_) => 1,
        }
    }

    /// Short machine-readable kind.
    pub fn kind(&self) -> &'static str {
        use rsmf_core::Error as E;
        match self {
            ExperimentError::Core(e) => match e {
                E::InvalidArgument(_) => "invalid_argument",
                E::TubeViolation(_) => "tube_violation",
                E::Unsupported(_) => "unsupported",
                E::Budget { .. } => "budget",
                E::StepFailure { .. } => "step_failure",
                E::InsufficientData(_) => "insufficient_data",
                E::Configuration(_) => "configuration",
            },
            ExperimentError::Config(_) => "configuration",
            ExperimentError::Io(_) => "io",
            ExperimentError::Json(_) => "json",
            ExperimentError::Csv(_) => "csv",
            ExperimentError::Assertion(_) => "assertion",
        }
    }
}
