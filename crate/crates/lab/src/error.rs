use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("config {origin}: {message}")]
    Config { origin: String, message: String },

    #[error(transparent)]
    Core(#[from] isq_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    /// 2 for numeric failures, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            LabError::Core(e) if e.is_numeric() => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
