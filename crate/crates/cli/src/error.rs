use thiserror::Error;

/// Process exit code for configuration and input validation problems.
pub const EXIT_VALIDATION: i32 = 2;
/// Process exit code when a pipeline stage fails after validation passed.
pub const EXIT_STAGE: i32 = 3;

/// Top-level failure taxonomy: anything wrong with the request itself is a
/// validation error (exit 2); anything that breaks while executing a stage
/// carries the stage name (exit 3).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: String, message: String },
}

impl CliError {
    pub fn stage(stage: &str, err: impl std::fmt::Display) -> Self {
        CliError::Stage {
            stage: stage.to_string(),
            message: err.to_string(),
        }
    }

    pub fn validation(err: impl std::fmt::Display) -> Self {
        CliError::Validation(err.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Stage { .. } => EXIT_STAGE,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
