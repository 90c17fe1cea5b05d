use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, malformed files, solver preconditions. Exit code 1.
    #[error("{0}")]
    Validation(String),
    /// Filesystem trouble. Exit code 2.
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(..) => 2,
        }
    }

    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |e| CliError::Io(context, e)
    }
}

impl From<prtk_core::PrError> for CliError {
    fn from(e: prtk_core::PrError) -> Self {
        CliError::Validation(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
