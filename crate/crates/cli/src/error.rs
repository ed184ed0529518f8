use std::fmt;
use std::path::Path;

/// A failed command: a machine-readable category plus a message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub category: &'static str,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn new(category: &'static str, message: impl Into<String>) -> Self {
        Self { category, message: message.into() }
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Self::new("parse", message)
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("config", message)
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new("io", format!("{}: {e}", path.display()))
    }

    /// Prefixes the message with the file it concerns.
    pub fn context(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }

    /// Process exit status for this category.
    pub fn exit_code(&self) -> i32 {
        match self.category {
            "config" => 10,
            "parse" => 11,
            "io" => 12,
            "capacity" => 13,
            "protocol" => 14,
            "simulation" => 15,
            "calibration" => 16,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.category, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<spikecore::Error> for CliError {
    fn from(e: spikecore::Error) -> Self {
        Self::new(e.category(), e.to_string())
    }
}
