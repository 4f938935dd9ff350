//! Simulation, experiment harness, file formats, and CLI support for the
//! online switched-system identifier in `switchid-core`.

pub mod harness;
pub mod plots;
pub mod simulate;

use std::io;
use std::path::PathBuf;

pub use harness::{ExperimentConfig, RunReport, SystemRef};
pub use simulate::{AffineMode, Halfspace, InputSignal, Sample, SwitchedSystemSpec, Trajectory};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] switchid_core::Error),
    #[error("sample t={t}: feature vector lies in no region")]
    OutOfDomain { t: u64 },
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

impl Error {
    /// Process exit code contract: 2 for configuration errors, 3 when the
    /// identifier's parameters diverge (non-finite values), 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(switchid_core::Error::NonFinite(_)) => 3,
            Error::Core(switchid_core::Error::Config(_)) | Error::Config(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}
