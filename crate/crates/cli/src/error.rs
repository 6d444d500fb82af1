use kropina_core::Error;

/// Errors surfaced by the command line, each tied to a stable exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error at line {line}, column {column}: {message}")]
    Config { line: usize, column: usize, message: String },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("property failure: {0}")]
    Property(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Hypothesis(_) => 3,
            CliError::Solver(_) | CliError::Io(_) => 4,
            CliError::Property(_) => 5,
        }
    }

    /// Config error without a source location.
    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config { line: 0, column: 0, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::UnsupportedWind { .. } | Error::Hypothesis(_) | Error::Assumption(_) | Error::Nonintegrable(_) => {
                CliError::Hypothesis(e.to_string())
            }
            Error::Parse { .. } | Error::InadmissibleControl(_) => CliError::config(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Solver(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Solver(format!("json: {e}"))
    }
}
