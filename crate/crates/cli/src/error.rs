use std::fmt;
use std::path::PathBuf;

use proxyaudit::AuditError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Where in an input file a problem was found.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<Column>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    /// 1-based field position.
    pub index: usize,
    pub name: String,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.file)?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
        }
        if let Some(c) = &self.column {
            write!(f, ", column {} ({})", c.index, c.name)?;
        }
        Ok(())
    }
}

/// Malformed or inconsistent input data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataError {
    pub code: &'static str,
    pub message: String,
    pub location: Option<Location>,
}

impl DataError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            location: None,
        }
    }

    pub fn at(mut self, location: Location) -> Self {
        self.location = Some(location);
        self
    }
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.location {
            Some(loc) => write!(f, "{loc}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{0}")]
    Data(DataError),

    #[error(transparent)]
    Domain(#[from] AuditError),
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e)
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Data(e) => e.code,
            CliError::Domain(e) => e.code(),
        }
    }

    /// 1 for usage and configuration problems, 2 for bad data.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 1,
            CliError::Data(_) | CliError::Domain(_) => 2,
        }
    }

    pub fn location(&self) -> Option<&Location> {
        match self {
            CliError::Data(e) => e.location.as_ref(),
            _ => None,
        }
    }
}

/// Machine form of an error, written to stderr.
#[derive(Debug, Serialize)]
pub struct ErrorReport<'a> {
    pub error: ErrorBody<'a>,
}

#[derive(Debug, Serialize)]
pub struct ErrorBody<'a> {
    pub code: &'a str,
    pub exit_code: u8,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub location: Option<&'a Location>,
}

impl<'a> ErrorReport<'a> {
    pub fn new(err: &'a CliError) -> Self {
        let message = match err {
            CliError::Data(e) => e.message.clone(),
            other => other.to_string(),
        };
        Self {
            error: ErrorBody {
                code: err.code(),
                exit_code: err.exit_code(),
                message,
                location: err.location(),
            },
        }
    }
}
