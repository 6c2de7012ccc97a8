//! HTTP API for interactive learning sessions.
//!
//! Sessions live in memory and, when the store has a journal directory, are
//! mirrored to one append-only JSONL file each so they survive a restart.

pub mod api;
pub mod error;
pub mod store;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use api::*;
pub use error::ApiError;
pub use store::Store;

type Shared = Arc<Store>;

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("malformed body: {e}")))
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn create(
    State(store): State<Shared>,
    body: Bytes,
) -> Result<(StatusCode, Json<CreateResponse>), ApiError> {
    let req: CreateSession = parse(&body)?;
    let out = blocking(move || store.create(req)).await?;
    Ok((StatusCode::CREATED, Json(out)))
}

async fn query(
    State(store): State<Shared>,
    Path(id): Path<String>,
) -> Result<Json<QueryResponse>, ApiError> {
    let live = store.get(&id)?;
    let guard = live.lock().expect("session poisoned");
    Ok(Json(guard.query()?))
}

async fn feedback(
    State(store): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<FeedbackResponse>, ApiError> {
    let req: FeedbackRequest = parse(&body)?;
    let live = store.get(&id)?;
    // MVR updates touch every sample, so keep them off the reactor.
    let out = blocking(move || live.lock().expect("session poisoned").feedback(req)).await?;
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
struct TopK {
    k: Option<usize>,
}

async fn posterior(
    State(store): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<TopK>,
) -> Result<Json<PosteriorResponse>, ApiError> {
    let live = store.get(&id)?;
    let guard = live.lock().expect("session poisoned");
    Ok(Json(guard.posterior(q.k.unwrap_or(DEFAULT_TOP_K))?))
}

async fn render(
    State(store): State<Shared>,
    Path(id): Path<String>,
) -> Result<Json<RenderResponse>, ApiError> {
    let live = store.get(&id)?;
    let guard = live.lock().expect("session poisoned");
    Ok(Json(guard.render()))
}

async fn result(
    State(store): State<Shared>,
    Path(id): Path<String>,
) -> Result<Json<FinalResult>, ApiError> {
    let live = store.get(&id)?;
    let guard = live.lock().expect("session poisoned");
    Ok(Json(guard.final_result()?))
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/query", get(query))
        .route("/sessions/{id}/feedback", post(feedback))
        .route("/sessions/{id}/posterior", get(posterior))
        .route("/sessions/{id}/render", get(render))
        .route("/sessions/{id}/result", get(result))
        .with_state(store)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, store: Arc<Store>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(store)).await
}
