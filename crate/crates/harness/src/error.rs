use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error at `{key}`: {msg}")]
    Parse { key: String, msg: String },
    #[error("invalid config value `{key}`: {msg}")]
    Invalid { key: String, msg: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("json output failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] chemoflux_core::Error),
    #[error("unknown preset `{0}`; see `list-presets`")]
    UnknownPreset(String),
    #[error("sweep error: {0}")]
    Sweep(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
