//! Error-to-exit-code mapping for the command-line tool.
//!
//! | code | class                                        |
//! |------|----------------------------------------------|
//! | 0    | success                                      |
//! | 2    | configuration / usage error                  |
//! | 3    | numeric-domain error (bad plane, degenerate) |
//! | 4    | I/O or file-format error                     |

use std::fmt;

/// Exit code for configuration problems.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for numeric-domain problems.
pub const EXIT_DOMAIN: i32 = 3;
/// Exit code for I/O and file-format problems.
pub const EXIT_IO: i32 = 4;

/// A fatal command error, tagged with its process exit code class.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or command arguments (exit 2).
    Config(String),
    /// Inputs outside the physics/estimator domain (exit 3).
    Domain(String),
    /// File system or file format failure (exit 4).
    Io(String),
}

impl CliError {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Domain(_) => EXIT_DOMAIN,
            CliError::Io(_) => EXIT_IO,
        }
    }

    /// Wrap a filesystem error with the path it concerns.
    pub fn io_at(path: &std::path::Path, err: impl fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(fm, "config error: {m}"),
            CliError::Domain(m) => write!(fm, "{m}"),
            CliError::Io(m) => write!(fm, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<biphoton::Error> for CliError {
    fn from(err: biphoton::Error) -> Self {
        use biphoton::Error as E;
        match err {
            E::Io(_) | E::Format { .. } => CliError::Io(err.to_string()),
            _ => CliError::Domain(err.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Io(err.to_string())
    }
}

/// Command result shorthand.
pub type CliResult<T> = Result<T, CliError>;
