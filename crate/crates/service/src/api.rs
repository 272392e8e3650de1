use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, RawQuery, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};
use uupl_core::calibration::CalibrationWarning;
use uupl_core::UncertaintyLevel;
use uupl_sim::Choice;

use crate::canonical::to_canonical_vec;
use crate::error::{Result, ServiceError};
use crate::session::{
    LiveSession, Phase, QueryRecord, Session, SessionConfig, SessionRequest, StoredFactors, SCHEMA_VERSION,
};
use crate::store::SessionStore;

/// Largest posterior grid served by default.
pub const DEFAULT_MAX_GRID_CELLS: usize = 40_000;

#[derive(Debug, Clone)]
pub struct AppState {
    pub store: Arc<SessionStore>,
    pub max_grid_cells: usize,
}

impl AppState {
    pub fn new(store: SessionStore) -> Self {
        Self { store: Arc::new(store), max_grid_cells: DEFAULT_MAX_GRID_CELLS }
    }
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub schema_version: u32,
    pub id: String,
    pub phase: Phase,
    pub answered: usize,
    pub calibration_remaining: usize,
    pub uncertainty_factors: StoredFactors,
    pub calibration_warnings: Vec<CalibrationWarning>,
    pub pending_query: Option<QueryRecord>,
    pub variance_trace: Vec<f64>,
}

impl From<&Session> for SessionStatus {
    fn from(s: &Session) -> Self {
        let (remaining, warnings) = match &s.calibration {
            Some(c) => (c.queries.len() - c.answers.answers.len(), c.warnings.clone()),
            None => (0, Vec::new()),
        };
        Self {
            schema_version: SCHEMA_VERSION,
            id: s.id.clone(),
            phase: s.phase,
            answered: s.transcript.len(),
            calibration_remaining: remaining,
            uncertainty_factors: s.uncertainty_factors,
            calibration_warnings: warnings,
            pending_query: s.pending_query.clone(),
            variance_trace: s.posterior.variance_trace.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub schema_version: u32,
    pub session_id: String,
    pub query: QueryRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRequest {
    pub query_id: String,
    pub choice: i64,
    pub level: i64,
}

impl AnswerRequest {
    pub fn parse(&self) -> Result<(Choice, UncertaintyLevel)> {
        let choice = u8::try_from(self.choice)
            .ok()
            .and_then(|c| Choice::try_from(c).ok())
            .ok_or_else(|| ServiceError::Validation(format!("choice must be 1 or 2, got {}", self.choice)))?;
        let level = UncertaintyLevel::new(self.level).map_err(|e| ServiceError::Validation(e.to_string()))?;
        Ok((choice, level))
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    schema_version: u32,
    error: ErrorDetail<'a>,
}

#[derive(Serialize)]
struct ErrorDetail<'a> {
    kind: &'a str,
    message: String,
}

fn json_response(status: StatusCode, bytes: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))], bytes).into_response()
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        if self.status().is_server_error() {
            log::error!("{self}");
        }
        let body = ErrorBody {
            schema_version: SCHEMA_VERSION,
            error: ErrorDetail { kind: self.kind(), message: self.to_string() },
        };
        let bytes = to_canonical_vec(&body).unwrap_or_default();
        json_response(self.status(), bytes)
    }
}

fn ok<T: Serialize>(status: StatusCode, value: &T) -> Result<Response> {
    Ok(json_response(status, to_canonical_vec(value)?))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(ServiceError::Validation(format!("worker failed: {e}"))))
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T> {
    serde_json::from_slice(body).map_err(|e| ServiceError::Validation(e.to_string()))
}

async fn create_session(State(app): State<AppState>, body: Bytes) -> Result<Response> {
    let req: SessionRequest = parse_body(&body)?;
    let store = app.store.clone();
    let session = blocking(move || {
        let cfg = SessionConfig::from_request(&req)?;
        let live = LiveSession::create(uuid::Uuid::new_v4().to_string(), cfg, now_ms())?;
        store.save(live.session())?;
        Ok(live.into_session())
    })
    .await?;
    ok(StatusCode::CREATED, &SessionStatus::from(&session))
}

async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response> {
    let session = app.store.load(&id)?;
    ok(StatusCode::OK, &SessionStatus::from(&session))
}

async fn next_query(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response> {
    let lock = app.store.writer_lock(&id);
    let _guard = lock.lock().await;
    let store = app.store.clone();
    let resp = blocking(move || {
        let mut live = LiveSession::restore(store.load(&id)?)?;
        let fresh = live.session().pending_query.is_none();
        let query = live.next_query(now_ms())?.clone();
        if fresh {
            store.save(live.session())?;
        }
        Ok(QueryResponse { schema_version: SCHEMA_VERSION, session_id: id, query })
    })
    .await?;
    ok(StatusCode::OK, &resp)
}

async fn submit_answer(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response> {
    let req: AnswerRequest = parse_body(&body)?;
    let (choice, level) = req.parse()?;
    let lock = app.store.writer_lock(&id);
    let _guard = lock.lock().await;
    let store = app.store.clone();
    let session = blocking(move || {
        let mut live = LiveSession::restore(store.load(&id)?)?;
        live.submit_answer(&req.query_id, choice, level, now_ms())?;
        store.save(live.session())?;
        Ok(live.into_session())
    })
    .await?;
    ok(StatusCode::OK, &SessionStatus::from(&session))
}

fn grid_param(raw: Option<&str>) -> Result<Option<usize>> {
    let Some(v) = raw.into_iter().flat_map(|q| q.split('&')).find_map(|kv| kv.strip_prefix("grid=")) else {
        return Ok(None);
    };
    v.parse().map(Some).map_err(|_| ServiceError::Validation(format!("grid must be a positive integer, got `{v}`")))
}

async fn get_posterior(
    State(app): State<AppState>,
    Path(id): Path<String>,
    RawQuery(query): RawQuery,
) -> Result<Response> {
    let n = grid_param(query.as_deref())?;
    let store = app.store.clone();
    let cap = app.max_grid_cells;
    let grid = blocking(move || {
        let live = LiveSession::restore(store.load(&id)?)?;
        let n = n.unwrap_or(live.session().config.stopping_grid_points_per_dim);
        live.posterior_grid(n, cap)
    })
    .await?;
    ok(StatusCode::OK, &grid)
}

async fn export_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response> {
    // validate before handing out the bytes
    let bytes = app.store.read_raw(&id)?;
    crate::store::parse_session(&bytes, &app.store.path_for(&id)?)?;
    Ok(json_response(StatusCode::OK, bytes))
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/query", get(next_query))
        .route("/sessions/{id}/answer", post(submit_answer))
        .route("/sessions/{id}/posterior", get(get_posterior))
        .route("/sessions/{id}/export", get(export_session))
        .with_state(app)
}

/// CORS for a browser client served from `origin`.
pub fn cors(origin: &str) -> Result<CorsLayer> {
    let allow = if origin == "*" {
        AllowOrigin::any()
    } else {
        AllowOrigin::exact(
            origin.parse().map_err(|_| ServiceError::Validation(format!("invalid CORS origin `{origin}`")))?,
        )
    };
    Ok(CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]))
}
