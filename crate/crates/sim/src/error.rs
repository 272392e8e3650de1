use std::path::PathBuf;

use thiserror::Error;
use uupl_core::CoreError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("engine failure at iteration {iteration}: {source}")]
    Engine {
        iteration: usize,
        #[source]
        source: CoreError,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("point {0:?} is outside the task domain")]
    OutOfDomain(Vec<f64>),

    #[error("unknown {what} `{value}`")]
    UnknownName { what: &'static str, value: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
