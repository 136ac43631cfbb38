use std::fmt;

use epigraph::Error;

pub const USAGE: i32 = 2;
pub const DATA_QUALITY: i32 = 3;
pub const MISSING_ARTIFACT: i32 = 4;
pub const CHECK_FAILED: i32 = 5;

/// An error message paired with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(USAGE, message)
    }

    pub fn message(&self) -> &str {
        &self.message
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::Parse { .. } | Error::Csv(_) | Error::Contract(_) | Error::Range(_) => USAGE,
            Error::DataQuality(_) => DATA_QUALITY,
            Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => MISSING_ARTIFACT,
            Error::Dimension { .. } | Error::Numeric(_) => CHECK_FAILED,
            Error::Io(_) | Error::Json(_) => 1,
        };
        Self::new(code, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new(1, e.to_string())
    }
}
