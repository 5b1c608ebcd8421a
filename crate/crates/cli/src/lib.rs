//! Command implementations behind the `echotrace` binary.

pub mod commands;
pub mod dataset;
pub mod job;
pub mod suites;

use std::fmt;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Config = 2,
    Simulation = 3,
    ValidationFailed = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { code: ExitCode::Config, message: message.into() }
    }

    pub fn simulation(message: impl Into<String>) -> Self {
        CliError { code: ExitCode::Simulation, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<echotrace::Error> for CliError {
    fn from(e: echotrace::Error) -> Self {
        use echotrace::Error as E;
        let code = match &e {
            E::Format { .. } | E::InvalidInput(_) | E::Config(_) | E::Json(_) | E::Io(_) => ExitCode::Config,
            E::Validation(_) | E::Wav(_) => ExitCode::Simulation,
        };
        CliError { code, message: e.to_string() }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches a path to I/O and parse failures.
pub(crate) fn context<T>(r: echotrace::Result<T>, what: &std::path::Path) -> CliResult<T> {
    r.map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", what.display(), err.message);
        err
    })
}
