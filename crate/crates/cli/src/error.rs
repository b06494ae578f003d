use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: malformed or invalid files and flags. Exit code 2.
    #[error("{0}")]
    Input(String),
    /// Failure while running a valid request. Exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<omnidyn_core::Error> for CliError {
    fn from(e: omnidyn_core::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}
