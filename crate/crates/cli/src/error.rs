//! Command failures and the exit codes they map to.

use std::fmt;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    /// Bad flags, missing or invalid configuration.
    Usage,
    /// Unreadable or invalid input files.
    Input,
    /// A model backend kept failing after retries.
    Backend,
}

impl FailureKind {
    pub fn code(self) -> u8 {
        match self {
            FailureKind::Usage => 1,
            FailureKind::Input => 2,
            FailureKind::Backend => 3,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: FailureKind,
    pub source: anyhow::Error,
}

impl CliError {
    pub fn new(kind: FailureKind, source: impl Into<anyhow::Error>) -> Self {
        Self {
            kind,
            source: source.into(),
        }
    }

    pub fn usage(message: impl fmt::Display) -> Self {
        Self::new(FailureKind::Usage, anyhow::anyhow!("{message}"))
    }

    pub fn input(message: impl fmt::Display) -> Self {
        Self::new(FailureKind::Input, anyhow::anyhow!("{message}"))
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.kind.code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.source)
    }
}

/// Attach a failure kind to any error result.
pub trait Classify<T> {
    fn or_usage(self) -> Result<T, CliError>;
    fn or_input(self) -> Result<T, CliError>;
    fn or_backend(self) -> Result<T, CliError>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn or_usage(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::new(FailureKind::Usage, e))
    }

    fn or_input(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::new(FailureKind::Input, e))
    }

    fn or_backend(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::new(FailureKind::Backend, e))
    }
}
