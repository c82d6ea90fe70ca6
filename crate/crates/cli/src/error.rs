use std::fmt;

use omniseg::OmniError;

/// Process exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration.
    Usage(String),
    /// Missing, unreadable or inconsistent inputs.
    Data(String),
    Core(OmniError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Core(e) => match e {
                OmniError::Config(_) | OmniError::Parse(_) => EXIT_USAGE,
                OmniError::NonFinite { .. } | OmniError::UndefinedCorrelation(_) => EXIT_NUMERIC,
                _ => EXIT_DATA,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<OmniError> for CliError {
    fn from(e: OmniError) -> Self {
        CliError::Core(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
