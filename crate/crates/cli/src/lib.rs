//! Library side of the zetalab CLI: configuration, pipeline stages and the
//! verification suites. The binary in main.rs is a thin dispatcher over
//! these, and the acceptance tests drive them directly.

pub mod config;
pub mod pipeline;
pub mod verify;

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration (exit 4).
    Config(String),
    /// Required artifacts from earlier stages are absent (exit 2).
    MissingArtifacts(String),
    /// Failure inside the numerics (exit 3).
    Core(zetalab_core::Error),
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::MissingArtifacts(msg) => write!(f, "missing artifacts: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<zetalab_core::Error> for CliError {
    fn from(e: zetalab_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    /// Stable exit-code contract: 0 success, 2 missing inputs, 3 numerical
    /// failure, 4 configuration error.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 4,
            CliError::MissingArtifacts(_) => 2,
            CliError::Core(e) => match e {
                zetalab_core::Error::AmbiguousRounding { .. }
                | zetalab_core::Error::InvalidArgument(_)
                | zetalab_core::Error::InvalidMap(_)
                | zetalab_core::Error::UnsupportedDimension { .. } => 4,
                _ => 3,
            },
            CliError::Io(e) if e.kind() == std::io::ErrorKind::NotFound => 2,
            CliError::Io(_) => 3,
        }
    }
}
