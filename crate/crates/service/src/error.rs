use std::path::PathBuf;

use axum::http::StatusCode;
use thiserror::Error;
use uupl_core::CoreError;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid request: {0}")]
    Validation(String),

    #[error("session `{0}` not found")]
    NotFound(String),

    #[error("session is {phase}; {action} is not available")]
    WrongPhase { phase: &'static str, action: &'static str },

    #[error("session has stopped; no further queries")]
    Terminal,

    #[error("no query is pending")]
    NoPendingQuery,

    #[error("query `{0}` was already answered")]
    StaleQuery(String),

    #[error("query `{given}` is not the pending query `{pending}`")]
    UnknownQuery { given: String, pending: String },

    #[error("grid of {cells} cells exceeds the cap of {cap}")]
    GridTooLarge { cells: u128, cap: usize },

    #[error("{path}: schema version {found} is not supported (expected {expected})")]
    VersionMismatch { path: PathBuf, found: u64, expected: u32 },

    #[error("{path}: corrupt session file: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("replayed transcript diverged at answer {index}: {reason}")]
    ReplayMismatch { index: usize, reason: String },

    #[error("engine error: {0}")]
    Engine(#[from] CoreError),
}

impl ServiceError {
    /// Stable machine-readable tag sent to clients.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Validation(_) => "validation",
            Self::NotFound(_) => "not_found",
            Self::WrongPhase { .. } => "wrong_phase",
            Self::Terminal => "terminal",
            Self::NoPendingQuery => "no_pending_query",
            Self::StaleQuery(_) => "stale_query",
            Self::UnknownQuery { .. } => "unknown_query",
            Self::GridTooLarge { .. } => "grid_too_large",
            Self::VersionMismatch { .. } => "version_mismatch",
            Self::Corrupt { .. } => "corrupt",
            Self::Io { .. } => "io",
            Self::ReplayMismatch { .. } => "replay_mismatch",
            Self::Engine(_) => "engine",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            Self::Validation(_) | Self::GridTooLarge { .. } => StatusCode::BAD_REQUEST,
            Self::NotFound(_) => StatusCode::NOT_FOUND,
            Self::WrongPhase { .. } | Self::NoPendingQuery | Self::StaleQuery(_) | Self::UnknownQuery { .. } => {
                StatusCode::CONFLICT
            }
            Self::Terminal => StatusCode::GONE,
            Self::VersionMismatch { .. }
            | Self::Corrupt { .. }
            | Self::Io { .. }
            | Self::ReplayMismatch { .. }
            | Self::Engine(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;
