//! HTTP front for [`StubBackend`], speaking the same protocol as real
//! backends.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::Value;
use tokio::net::TcpListener;

use super::stub::StubBackend;
use super::transport::TransportError;
use super::Role;

pub fn stub_router(backend: StubBackend) -> Router {
    Router::new()
        .route("/v1/{role}", post(handle))
        .with_state(Arc::new(backend))
}

async fn handle(
    State(backend): State<Arc<StubBackend>>,
    Path(role): Path<String>,
    Json(body): Json<Value>,
) -> Response {
    let Ok(role) = role.parse::<Role>() else {
        return (StatusCode::NOT_FOUND, format!("unknown role {role}")).into_response();
    };
    match backend.handle(role, body) {
        Ok(v) => Json(v).into_response(),
        Err(TransportError::Rejected(d)) => (StatusCode::BAD_REQUEST, d).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

/// Serve the stub on an already bound listener until `shutdown` resolves.
pub async fn serve_stub(
    backend: StubBackend,
    listener: TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, stub_router(backend))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Bind `addr` (port 0 picks a free port) and return the listener with the
/// address actually bound.
pub async fn bind(addr: SocketAddr) -> std::io::Result<(TcpListener, SocketAddr)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((listener, local))
}
