use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Engine(#[from] cohflux::error::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Engine(cohflux::error::Error::SizeCap(_)) => 2,
            _ => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        use cohflux::error::Error as E;
        match self {
            CliError::Config(_) => "config",
            CliError::Engine(E::Precondition(_)) => "precondition",
            CliError::Engine(E::ConditionViolation { .. }) => "condition_violation",
            CliError::Engine(E::Window(_) | E::Wraparound(_)) => "window",
            CliError::Engine(E::SizeCap(_)) => "size_cap",
            CliError::Engine(_) => "numerical",
            CliError::Io(_) => "io",
            CliError::Output(_) => "output",
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            error: ErrorBody {
                kind: self.kind(),
                message: self.to_string(),
                exit_code: self.exit_code(),
            },
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub error: ErrorBody,
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: u8,
}

pub type CliResult<T> = Result<T, CliError>;
