use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] mfgda::Error),

    #[error("verification failed: {}", .0.join(", "))]
    Verify(Vec<String>),
}

impl CliError {
    /// 0 ok, 1 config, 2 non-convergence, 3 stability, 4 verification failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Core(mfgda::Error::NonConvergence { .. }) => 2,
            CliError::Core(mfgda::Error::StabilityViolation { .. }) => 3,
            CliError::Core(_) => 1,
            CliError::Verify(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;
