//! Standard-library companion to `gcv-core`: configuration and file formats,
//! data simulation, the three demonstration experiments, a self-verification
//! battery and a timing harness. The `gcvfilter` binary dispatches into this
//! crate.

use std::path::PathBuf;

pub mod bench;
pub mod config;
pub mod csvout;
pub mod experiments;
pub mod files;
pub mod sim;
pub mod verify;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid configuration or flag values.
    #[error("config error: {0}")]
    Config(String),
    /// Structurally broken input data or undefined derived quantities.
    #[error("data error: {0}")]
    Data(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] gcv_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
