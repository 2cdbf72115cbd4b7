use std::fmt;

/// Failure of a command, carrying the process exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, config or input contents. Exit 2.
    Invalid(String),
    /// Unreadable input or unwritable output. Exit 3.
    Io(String),
    /// The factorizer stalled before accepting a single step. Exit 4.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) => write!(f, "invalid input: {m}"),
            CliError::Io(m) => write!(f, "i/o failure: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<sonmf_core::Error> for CliError {
    fn from(e: sonmf_core::Error) -> Self {
        match e {
            sonmf_core::Error::Io(m) => CliError::Io(m),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
