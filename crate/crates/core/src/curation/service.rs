//! HTTP review service over a [`BenchmarkManifest`].
//!
//! | route                     | body / query               | reply                          |
//! |---------------------------|----------------------------|--------------------------------|
//! | `GET /review/next`        | `?reviewer=..&category=..` | item, or 204 when none pending |
//! | `POST /review/decision`   | [`Decision`]               | updated item                   |
//! | `POST /review/reset`      | [`ResetRequest`], bearer   | updated item                   |
//! | `GET /review/progress`    |                            | [`Progress`]                   |
//! | `GET /review/manifest`    |                            | whole manifest                 |
//!
//! Errors are `{"error": kind, "message": ..}` with 404 for unknown
//! samples, 409 for version conflicts and finalized manifests, 422 for
//! illegal transitions and 403 for admin actions without the admin token.
//! With paths configured, each accepted write appends to the audit log
//! and then rewrites the manifest file.

use std::fs::OpenOptions;
use std::future::Future;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;

use super::review::{replay, AuditEvent, BenchmarkManifest, Decision, ReviewError};
use crate::datastore::{atomic_write, StoreError};
use crate::metrics::Category;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResetRequest {
    pub sample_id: String,
    pub admin_id: String,
    pub expected_version: u64,
}

type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub struct ReviewStore {
    manifest: BenchmarkManifest,
    manifest_path: Option<PathBuf>,
    audit_path: Option<PathBuf>,
    admin_token: Option<String>,
    clock: Clock,
}

fn io_err(path: &Path, e: std::io::Error) -> StoreError {
    StoreError::Io {
        path: path.display().to_string(),
        source: e,
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn read_audit_log(path: &Path) -> Result<Vec<AuditEvent>, StoreError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path, e)),
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(StoreError::from))
        .collect()
}

impl ReviewStore {
    /// Keep everything in memory.
    pub fn in_memory(manifest: BenchmarkManifest) -> Self {
        Self {
            manifest,
            manifest_path: None,
            audit_path: None,
            admin_token: None,
            clock: Arc::new(unix_now),
        }
    }

    /// Load a manifest file and bring it up to date with the audit log,
    /// which may be ahead if the process stopped between the two writes.
    pub fn open(manifest_path: &Path, audit_path: &Path) -> Result<Self, StoreError> {
        let bytes = std::fs::read(manifest_path).map_err(|e| io_err(manifest_path, e))?;
        let mut manifest: BenchmarkManifest = serde_json::from_slice(&bytes)?;
        let events = read_audit_log(audit_path)?;
        let ahead: Vec<_> = events.into_iter().filter(|e| e.seq >= manifest.next_seq).collect();
        if !ahead.is_empty() {
            manifest =
                replay(manifest, &ahead).map_err(|e| io_err(audit_path, std::io::Error::other(e.to_string())))?;
        }
        Ok(Self {
            manifest,
            manifest_path: Some(manifest_path.to_path_buf()),
            audit_path: Some(audit_path.to_path_buf()),
            admin_token: None,
            clock: Arc::new(unix_now),
        })
    }

    pub fn with_admin_token(mut self, token: impl Into<String>) -> Self {
        self.admin_token = Some(token.into());
        self
    }

    pub fn with_clock(mut self, clock: impl Fn() -> u64 + Send + Sync + 'static) -> Self {
        self.clock = Arc::new(clock);
        self
    }

    pub fn manifest(&self) -> &BenchmarkManifest {
        &self.manifest
    }

    fn persist(&self, event: &AuditEvent) -> Result<(), StoreError> {
        if let Some(path) = &self.audit_path {
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| io_err(path, e))?;
            let mut line = serde_json::to_vec(event)?;
            line.push(b'\n');
            f.write_all(&line).map_err(|e| io_err(path, e))?;
            f.sync_data().map_err(|e| io_err(path, e))?;
        }
        if let Some(path) = &self.manifest_path {
            atomic_write(path, &serde_json::to_vec_pretty(&self.manifest)?)?;
        }
        Ok(())
    }
}

type Shared = Arc<Mutex<ReviewStore>>;

pub fn review_router(store: ReviewStore) -> Router {
    Router::new()
        .route("/review/next", get(next))
        .route("/review/decision", post(decision))
        .route("/review/reset", post(reset))
        .route("/review/progress", get(progress))
        .route("/review/manifest", get(manifest))
        .with_state(Arc::new(Mutex::new(store)))
}

pub async fn serve_review(
    store: ReviewStore,
    listener: TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, review_router(store))
        .with_graceful_shutdown(shutdown)
        .await
}

fn error(status: StatusCode, kind: &str, message: String) -> Response {
    (status, Json(json!({"error": kind, "message": message}))).into_response()
}

fn review_error(e: ReviewError) -> Response {
    let message = e.to_string();
    match e {
        ReviewError::VersionConflict { current, .. } => (
            StatusCode::CONFLICT,
            Json(json!({"error": "version_conflict", "message": message, "current_version": current})),
        )
            .into_response(),
        ReviewError::UnknownSample(_) => error(StatusCode::NOT_FOUND, "unknown_sample", message),
        ReviewError::InvalidTransition { .. } => error(StatusCode::UNPROCESSABLE_ENTITY, "invalid_transition", message),
        ReviewError::MissingCategory => error(StatusCode::UNPROCESSABLE_ENTITY, "missing_category", message),
        ReviewError::NotAdmin => error(StatusCode::FORBIDDEN, "not_admin", message),
        ReviewError::Finalized => error(StatusCode::CONFLICT, "finalized", message),
        ReviewError::Replay { .. } => error(StatusCode::INTERNAL_SERVER_ERROR, "replay", message),
    }
}

#[derive(Deserialize)]
struct NextQuery {
    #[allow(dead_code)]
    reviewer: Option<String>,
    category: Option<String>,
}

async fn next(State(store): State<Shared>, Query(q): Query<NextQuery>) -> Response {
    let category = match q.category.as_deref().map(str::parse::<Category>).transpose() {
        Ok(c) => c,
        Err(e) => return error(StatusCode::BAD_REQUEST, "bad_category", e.to_string()),
    };
    let store = store.lock().expect("review store lock");
    match store.manifest.next_pending(category) {
        Some(item) => Json(item).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

fn write(store: &Shared, op: impl FnOnce(&mut BenchmarkManifest, u64) -> Result<AuditEvent, ReviewError>) -> Response {
    let mut store = store.lock().expect("review store lock");
    let now = (store.clock)();
    let before = store.manifest.clone();
    let event = match op(&mut store.manifest, now) {
        Ok(e) => e,
        Err(e) => return review_error(e),
    };
    if let Err(e) = store.persist(&event) {
        store.manifest = before;
        return error(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string());
    }
    Json(store.manifest.get(&event.sample_id).expect("item exists")).into_response()
}

async fn decision(State(store): State<Shared>, Json(d): Json<Decision>) -> Response {
    write(&store, |m, now| m.ingest_review(&d, now))
}

async fn reset(State(store): State<Shared>, headers: HeaderMap, Json(r): Json<ResetRequest>) -> Response {
    let authorized = {
        let guard = store.lock().expect("review store lock");
        let presented = headers
            .get("authorization")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        matches!((&guard.admin_token, presented), (Some(t), Some(p)) if t == p)
    };
    if !authorized {
        return review_error(ReviewError::NotAdmin);
    }
    write(&store, |m, now| {
        m.admin_reset(&r.sample_id, &r.admin_id, r.expected_version, now)
    })
}

async fn progress(State(store): State<Shared>) -> Response {
    Json(store.lock().expect("review store lock").manifest.progress()).into_response()
}

async fn manifest(State(store): State<Shared>) -> Response {
    Json(&store.lock().expect("review store lock").manifest).into_response()
}
