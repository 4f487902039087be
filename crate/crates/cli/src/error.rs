use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration; the message names the offending field.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] paracflow::Error),

    #[error("verification failed: {0}")]
    Verify(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(paracflow::Error::Argument(_)) => 2,
            CliError::Core(_) => 3,
            CliError::Verify(_) => 4,
            CliError::Io(_) | CliError::Csv(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}
