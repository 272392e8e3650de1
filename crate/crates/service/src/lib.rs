//! Live preference elicitation over HTTP: sessions move from an optional
//! calibration phase through active learning to a stop, and every answer is
//! persisted before the response goes out.

pub mod api;
pub mod canonical;
pub mod error;
pub mod session;
pub mod store;

pub use api::{cors, router, AppState, DEFAULT_MAX_GRID_CELLS};
pub use error::{Result, ServiceError};
pub use session::{replay, LiveSession, Phase, Session, SessionConfig, SessionRequest, SCHEMA_VERSION};
pub use store::{load_session, save_session, SessionStore};
