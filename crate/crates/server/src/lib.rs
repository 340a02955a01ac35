//! Data-collection service: hands out session plans, ingests trial records
//! and serves the browser bundle.
//!
//! | route | |
//! |---|---|
//! | `POST /api/trials` | store one trial record (JSON) |
//! | `GET /api/session?version=&mode=&key=` | the participant's session plan |
//! | `GET /api/game?version=` | game parameters, equilibria and display bounds |
//! | `GET /api/export[?key=]` | the sample table as CSV |
//! | `/` | static files |

pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use coadapt_core::config::GameFile;
use coadapt_core::protocol::{build_session, DisplayBounds, DisplayMode, GameVersion, SessionPlan};
use coadapt_core::TrialRecord;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use tower_http::services::ServeDir;

pub use store::{ExportFilter, Inserted, Store, StoreError, StoredTrial};

/// Env var naming the listen port.
pub const PORT_ENV: &str = "PORT";
/// Env var naming the SQLite file.
pub const DATA_PATH_ENV: &str = "DATA_PATH";
pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_DATA_PATH: &str = "coadapt.sqlite";

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub addr: SocketAddr,
    pub data_path: PathBuf,
    pub static_dir: Option<PathBuf>,
    /// Serve this plan to every participant instead of building one.
    pub replay: Option<SessionPlan>,
    /// Allow display/game combinations outside the experiment design.
    pub research: bool,
}

impl ServerConfig {
    /// Port and data path from `PORT` and `DATA_PATH`, falling back to defaults.
    pub fn from_env() -> Result<Self, String> {
        let port = match std::env::var(PORT_ENV) {
            Ok(p) => p.parse().map_err(|_| format!("{PORT_ENV}={p:?} is not a port number"))?,
            Err(_) => DEFAULT_PORT,
        };
        let data_path = std::env::var_os(DATA_PATH_ENV).map_or_else(|| PathBuf::from(DEFAULT_DATA_PATH), PathBuf::from);
        Ok(Self {
            addr: SocketAddr::from(([0, 0, 0, 0], port)),
            data_path,
            static_dir: None,
            replay: None,
            research: false,
        })
    }
}

struct AppState {
    store: Store,
    replay: Option<SessionPlan>,
    research: bool,
}

type Shared = Arc<AppState>;

/// Session seed derived from the participant key, so plans are reproducible
/// from the key alone.
pub fn seed_for_key(key: &str) -> u64 {
    let digest = Sha256::digest(key.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(bytes)
}

fn error(status: StatusCode, message: impl ToString) -> Response {
    (status, Json(json!({ "accepted": false, "error": message.to_string() }))).into_response()
}

fn internal(e: impl std::fmt::Display) -> Response {
    log::error!("{e}");
    error(StatusCode::INTERNAL_SERVER_ERROR, e)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, Response> {
    tokio::task::spawn_blocking(f).await.map_err(internal)
}

async fn post_trial(State(state): State<Shared>, body: String) -> Response {
    let record = match TrialRecord::from_json(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    let result = match blocking(move || state.store.insert_trial(&record)).await {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    match result {
        Ok(ins) => Json(json!({ "accepted": true, "trial_id": ins.trial_id })).into_response(),
        Err(e @ StoreError::Conflict { .. }) => error(StatusCode::CONFLICT, e),
        Err(StoreError::Core(e)) => error(StatusCode::BAD_REQUEST, e),
        Err(e) => internal(e),
    }
}

#[derive(Debug, Deserialize)]
struct SessionQuery {
    version: Option<String>,
    mode: Option<String>,
    key: Option<String>,
}

async fn get_session(State(state): State<Shared>, Query(q): Query<SessionQuery>) -> Response {
    let Some(key) = q.key.filter(|k| !k.trim().is_empty()) else {
        return error(StatusCode::BAD_REQUEST, "missing participant key");
    };
    if let Some(plan) = &state.replay {
        return Json(SessionPlan { participant_key: key, ..plan.clone() }).into_response();
    }
    let version: GameVersion = match q.version.as_deref().unwrap_or("").parse() {
        Ok(v) => v,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    let mode: DisplayMode = match q.mode.as_deref().unwrap_or("").parse() {
        Ok(m) => m,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    let plan = match build_session(version, mode, seed_for_key(&key), &key, state.research) {
        Ok(p) => p,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    match blocking(move || state.store.session_or_insert(&plan)).await {
        Ok(Ok(plan)) => Json(plan).into_response(),
        Ok(Err(e)) => internal(e),
        Err(resp) => resp,
    }
}

#[derive(Debug, Deserialize)]
struct GameQuery {
    version: Option<String>,
}

/// Everything a client needs to run the game locally.
#[derive(Debug, Serialize)]
pub struct GameInfo {
    pub version: GameVersion,
    pub params: GameFile,
    pub nash: (Vec<f64>, Vec<f64>),
    pub stackelberg: (Vec<f64>, Vec<f64>),
    pub bounds: DisplayBounds,
}

pub fn game_info(version: GameVersion) -> coadapt_core::Result<GameInfo> {
    let p = version.params()?;
    let eq = p.equilibria()?;
    let v = |x: &coadapt_core::Vector| x.iter().copied().collect::<Vec<_>>();
    Ok(GameInfo {
        version,
        params: GameFile::from_params(&p, Some(version.name().into())),
        nash: (v(&eq.nash.h), v(&eq.nash.m)),
        stackelberg: (v(&eq.stackelberg.h), v(&eq.stackelberg.m)),
        bounds: DisplayBounds::for_game(&p),
    })
}

async fn get_game(State(state): State<Shared>, Query(q): Query<GameQuery>) -> Response {
    let version = match q.version.as_deref() {
        Some(v) => v.parse(),
        None => Ok(state.replay.as_ref().map_or(GameVersion::TwoByTwo, |p| p.game_version)),
    };
    match version.and_then(game_info) {
        Ok(info) => Json(info).into_response(),
        Err(e) => error(StatusCode::BAD_REQUEST, e),
    }
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    key: Option<String>,
}

async fn get_export(State(state): State<Shared>, Query(q): Query<ExportQuery>) -> Response {
    let filter = ExportFilter { participant_key: q.key, alpha: None };
    let result = blocking(move || {
        let mut buf = Vec::new();
        state.store.export_csv(&filter, &mut buf).map(|_| buf)
    })
    .await;
    match result {
        Ok(Ok(buf)) => ([(header::CONTENT_TYPE, "text/csv")], buf).into_response(),
        Ok(Err(e)) => internal(e),
        Err(resp) => resp,
    }
}

pub fn router(store: Store, replay: Option<SessionPlan>, research: bool, static_dir: Option<PathBuf>) -> Router {
    let state = Arc::new(AppState { store, replay, research });
    let api = Router::new()
        .route("/api/trials", post(post_trial))
        .route("/api/session", get(get_session))
        .route("/api/game", get(get_game))
        .route("/api/export", get(get_export))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds, prints `listening on http://ADDR` to stderr and serves until
/// ctrl-c.
pub async fn run(config: ServerConfig) -> std::io::Result<()> {
    let store = Store::open(&config.data_path).map_err(std::io::Error::other)?;
    let app = router(store, config.replay, config.research, config.static_dir);
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
