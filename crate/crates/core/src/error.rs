use thiserror::Error;

/// Error taxonomy; the CLI maps these onto process exit codes
/// (config -> 2, validation -> 3, schedule -> 4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("schedule error: {0}")]
    Schedule(String),
    #[error("validation failed: {0}")]
    Validation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn schedule(msg: impl Into<String>) -> Self {
        Error::Schedule(msg.into())
    }
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Validation(_) => 3,
            Error::Schedule(_) => 4,
        }
    }
}
