//! Driver for the `hartree-lab` command line: configuration, subcommands,
//! persisted artifacts and plots.

pub mod commands;
pub mod config;
pub mod plots;

use thiserror::Error;

pub use commands::{run, Command, Invocation, Outcome};
pub use config::RunConfig;

/// Exit status of a run.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_TOLERANCE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Lab(#[from] hartree::Error),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("plot error: {0}")]
    Plot(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use hartree::Error as E;
        match self {
            CliError::Lab(E::Assembly(_) | E::Spectral(_) | E::Numerical(_) | E::Linalg(_)) => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}
