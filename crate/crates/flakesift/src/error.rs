//! Error type with the CLI's exit-code contract: user/input errors exit 2,
//! internal errors exit 1.

use flakesift_core::CoreError;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    User(String),
    #[error("{0}")]
    Internal(String),
}

impl AppError {
    pub fn user(msg: impl Into<String>) -> Self {
        AppError::User(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        AppError::Internal(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::User(_) => 2,
            AppError::Internal(_) => 1,
        }
    }
}

impl From<CoreError> for AppError {
    fn from(e: CoreError) -> Self {
        match e {
            // Violations of input contracts are the caller's fault.
            CoreError::UnknownLabel(_)
            | CoreError::DuplicateId(_)
            | CoreError::EmptyCorpus
            | CoreError::NoContrastClass
            | CoreError::InvalidArgument(_)
            | CoreError::Schema(_)
            | CoreError::Split(_) => AppError::User(e.to_string()),
            CoreError::ShapeMismatch(_) | CoreError::NonFinite(_) => {
                AppError::Internal(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::User(e.to_string())
    }
}

pub type AppResult<T> = Result<T, AppError>;
