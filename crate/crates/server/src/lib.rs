//! HTTP API over trace sessions.
//!
//! | method | path | body / reply |
//! |---|---|---|
//! | POST | `/sessions` | `{"path": ...}` → [`SessionInfo`] |
//! | GET | `/sessions/{id}` | [`SessionInfo`] |
//! | GET | `/sessions/{id}/events/{k}` | event fields plus `raw_line` |
//! | GET | `/sessions/{id}/state/{k}` | [`StatePayload`] |
//! | GET | `/sessions/{id}/stats/{k}` | [`StatsPayload`] |
//! | GET | `/sessions/{id}/partitions/{k}?range=r` | [`PartitionsPayload`] |
//! | GET | `/sessions/{id}/screenshot/{k}.png?range=r` | `image/png` |
//! | POST | `/sessions/{id}/notify` | `{"kind", "event_index", "node_id"}` → panels |
//! | PUT | `/sessions/{id}/prefs` | preferences XML → [`PrefsPayload`] |
//!
//! `k = -1` addresses the initial state. Errors reply with a JSON
//! [`api::ErrorBody`] and a 4xx status: 404 for unknown sessions, 416 for
//! event indexes out of range, 403 for paths outside the root directory.

pub mod api;
pub mod error;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::header;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::Deserialize;
use tower_http::services::ServeDir;

use tracescope_core::explorer::{EventView, Explorer, ExplorerConfig, NotifyResponse};
use tracescope_core::ext::{ExtensionRegistry, VisualEvent};
use tracescope_core::partition::coverage_geometry;
use tracescope_core::prefs::{from_xml_str, Preferences};
use tracescope_core::style::style_table;

pub use api::{OpenSessionRequest, PartitionsPayload, PrefsPayload, SessionInfo, StatePayload, StatsPayload};
pub use error::ApiError;

#[derive(Clone)]
pub struct ServerConfig {
    /// Traces may only be opened from below this directory.
    pub root: PathBuf,
    /// Directory with the browser UI bundle, served at `/`.
    pub static_dir: Option<PathBuf>,
    pub explorer: ExplorerConfig,
    /// Preferences every new session starts with.
    pub prefs: Preferences,
    pub registry: ExtensionRegistry,
}

impl ServerConfig {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            static_dir: None,
            explorer: ExplorerConfig::default(),
            prefs: Preferences::default(),
            registry: ExtensionRegistry::default(),
        }
    }
}

type Session = Arc<Mutex<Explorer>>;

pub struct AppState {
    config: ServerConfig,
    root: PathBuf,
    sessions: RwLock<HashMap<u64, Session>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(config: ServerConfig) -> std::io::Result<Arc<Self>> {
        let root = config.root.canonicalize()?;
        Ok(Arc::new(Self { config, root, sessions: RwLock::new(HashMap::new()), next_id: AtomicU64::new(1) }))
    }

    fn session(&self, id: u64) -> Result<Session, ApiError> {
        self.sessions.read().unwrap().get(&id).cloned().ok_or(ApiError::UnknownSession(id))
    }

    fn resolve_path(&self, requested: &str) -> Result<PathBuf, ApiError> {
        let p = Path::new(requested);
        let joined = if p.is_absolute() { p.to_path_buf() } else { self.root.join(p) };
        let canon = joined
            .canonicalize()
            .map_err(|e| ApiError::NotFound(format!("{requested}: {e}")))?;
        if !canon.starts_with(&self.root) {
            return Err(ApiError::Forbidden(format!("{requested} is outside the served directory")));
        }
        if !canon.is_file() {
            return Err(ApiError::NotFound(format!("{requested} is not a file")));
        }
        Ok(canon)
    }

    /// Opens a session directly, bypassing HTTP. The path rules still apply.
    pub fn open_session(&self, requested: &str) -> Result<u64, ApiError> {
        let path = self.resolve_path(requested)?;
        let mut explorer = Explorer::open(&path, &self.config.registry, self.config.explorer.clone())?;
        explorer.set_prefs(self.config.prefs.clone());
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        self.sessions.write().unwrap().insert(id, Arc::new(Mutex::new(explorer)));
        tracing::info!(id, path = %path.display(), "session opened");
        Ok(id)
    }
}

/// Runs `f` on the session's explorer on the blocking pool.
async fn with_session<T, F>(state: &AppState, id: u64, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&mut Explorer) -> Result<T, ApiError> + Send + 'static,
{
    let session = state.session(id)?;
    tokio::task::spawn_blocking(move || {
        let mut ex = session.lock().unwrap_or_else(|p| p.into_inner());
        f(&mut ex)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
}

fn raw_line_of(ex: &mut Explorer, k: i64) -> Result<Option<String>, ApiError> {
    if k < 0 {
        return Ok(None);
    }
    Ok(Some(ex.event(k as u64)?.raw_line))
}

fn info(id: u64, ex: &Explorer) -> SessionInfo {
    SessionInfo { id, meta: ex.meta().clone(), style: style_table(), prefs: ex.prefs().clone() }
}

#[derive(Debug, Default, Deserialize)]
pub struct RangeQuery {
    pub range: Option<f64>,
}

async fn open_session(
    State(state): State<Arc<AppState>>,
    Json(req): Json<OpenSessionRequest>,
) -> Result<Json<SessionInfo>, ApiError> {
    let st = state.clone();
    let id = tokio::task::spawn_blocking(move || st.open_session(&req.path))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    with_session(&state, id, move |ex| Ok(Json(info(id, ex)))).await
}

async fn get_session(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<u64>) -> Result<Json<SessionInfo>, ApiError> {
    with_session(&state, id, move |ex| Ok(Json(info(id, ex)))).await
}

async fn get_event(
    State(state): State<Arc<AppState>>,
    UrlPath((id, k)): UrlPath<(u64, i64)>,
) -> Result<Json<EventView>, ApiError> {
    with_session(&state, id, move |ex| {
        let k = u64::try_from(k).map_err(|_| ApiError::OutOfRange(format!("event index {k} out of range")))?;
        Ok(Json(ex.event(k)?))
    })
    .await
}

async fn get_state(
    State(state): State<Arc<AppState>>,
    UrlPath((id, k)): UrlPath<(u64, i64)>,
) -> Result<Json<StatePayload>, ApiError> {
    with_session(&state, id, move |ex| {
        let s = ex.state_at(k)?;
        Ok(Json(StatePayload::new(&s, raw_line_of(ex, k)?)))
    })
    .await
}

async fn get_stats(
    State(state): State<Arc<AppState>>,
    UrlPath((id, k)): UrlPath<(u64, i64)>,
) -> Result<Json<StatsPayload>, ApiError> {
    with_session(&state, id, move |ex| {
        let stats = ex.stats(k)?;
        Ok(Json(StatsPayload { raw_line: raw_line_of(ex, k)?, stats }))
    })
    .await
}

async fn get_partitions(
    State(state): State<Arc<AppState>>,
    UrlPath((id, k)): UrlPath<(u64, i64)>,
    Query(q): Query<RangeQuery>,
) -> Result<Json<PartitionsPayload>, ApiError> {
    with_session(&state, id, move |ex| {
        let p = ex.partitions_at(k, q.range)?;
        let s = ex.state_at(k)?;
        let coverage = coverage_geometry(&p, &s);
        Ok(Json(PartitionsPayload { raw_line: raw_line_of(ex, k)?, partitions: (*p).clone(), coverage }))
    })
    .await
}

async fn get_screenshot(
    State(state): State<Arc<AppState>>,
    UrlPath((id, file)): UrlPath<(u64, String)>,
    Query(q): Query<RangeQuery>,
) -> Result<Response, ApiError> {
    let k: i64 = file
        .strip_suffix(".png")
        .unwrap_or(&file)
        .parse()
        .map_err(|_| ApiError::BadRequest(format!("`{file}` is not an event index")))?;
    let png = with_session(&state, id, move |ex| Ok(ex.screenshot_png(k, q.range)?)).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn notify(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<u64>,
    Json(ve): Json<VisualEvent>,
) -> Result<Json<NotifyResponse>, ApiError> {
    with_session(&state, id, move |ex| Ok(Json(ex.notify(ve)?))).await
}

async fn put_prefs(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<u64>,
    body: String,
) -> Result<Json<PrefsPayload>, ApiError> {
    with_session(&state, id, move |ex| {
        let loaded = from_xml_str(&body)?;
        ex.set_prefs(loaded.prefs.clone());
        Ok(Json(PrefsPayload { prefs: loaded.prefs, warnings: loaded.warnings }))
    })
    .await
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/sessions", post(open_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/events/{k}", get(get_event))
        .route("/sessions/{id}/state/{k}", get(get_state))
        .route("/sessions/{id}/stats/{k}", get(get_stats))
        .route("/sessions/{id}/partitions/{k}", get(get_partitions))
        .route("/sessions/{id}/screenshot/{file}", get(get_screenshot))
        .route("/sessions/{id}/notify", post(notify))
        .route("/sessions/{id}/prefs", put(put_prefs));
    let api = match &state.config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    api.with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
