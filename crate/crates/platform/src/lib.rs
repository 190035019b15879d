//! Cloud-edge platform around the `radiosense-core` analytics: the
//! synthetic trace simulator, CSV/JSON file formats, the gateway
//! daemon, the cloud service, and the multi-command CLI.

pub mod cli;
pub mod cloud;
pub mod edge;
pub mod eval;
pub mod files;
pub mod sim;
pub mod trace;
pub mod wire;

pub use radiosense_core as core;

/// Errors raised by platform components.
#[derive(Debug, thiserror::Error)]
pub enum PlatformError {
    #[error(transparent)]
    Core(#[from] radiosense_core::CoreError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what}: {reason}")]
    Format { what: String, reason: String },
    #[error("{0}")]
    Config(String),
}

impl PlatformError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        PlatformError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn format(what: impl Into<String>, reason: impl std::fmt::Display) -> Self {
        PlatformError::Format {
            what: what.into(),
            reason: reason.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, PlatformError>;
