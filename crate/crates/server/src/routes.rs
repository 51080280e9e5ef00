use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use crate::error::ServiceError;
use crate::store::AnnotationStore;
use crate::SharedStore;

#[derive(Deserialize)]
pub struct AnnotatorQuery {
    pub annotator: String,
}

#[derive(Deserialize)]
pub struct RoundBody {
    pub annotator: String,
    pub checked: Vec<String>,
    /// Index of the round being submitted; lets clients retry safely.
    #[serde(default)]
    pub round: Option<usize>,
}

pub fn router(store: SharedStore) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/clusters/next", get(next_cluster))
        .route("/api/clusters/{id}/rounds", post(submit_round))
        .route("/api/export", get(export))
        .route("/api/progress", get(progress))
        .route("/api/preview/{file}", get(preview))
        .with_state(store)
}

/// Runs `f` against the store on the blocking pool; submissions fsync the log
/// while holding the lock.
async fn with_store<T, F>(store: SharedStore, f: F) -> Result<T, ServiceError>
where
    T: Send + 'static,
    F: FnOnce(&mut AnnotationStore) -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || {
        let mut guard = store.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
        f(&mut guard)
    })
    .await
    .map_err(|e| ServiceError::Internal(format!("worker failed: {e}")))?
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn next_cluster(State(store): State<SharedStore>, Query(q): Query<AnnotatorQuery>) -> Result<Response, ServiceError> {
    let task = with_store(store, move |s| s.next_cluster(&q.annotator)).await?;
    Ok(match task {
        Some(t) => Json(t).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn submit_round(
    State(store): State<SharedStore>,
    Path(id): Path<u32>,
    Json(body): Json<RoundBody>,
) -> Result<Response, ServiceError> {
    let out = with_store(store, move |s| s.submit(&body.annotator, id, &body.checked, body.round)).await?;
    Ok(Json(out).into_response())
}

async fn export(State(store): State<SharedStore>, Query(q): Query<AnnotatorQuery>) -> Result<Response, ServiceError> {
    let set = with_store(store, move |s| s.export(&q.annotator)).await?;
    let disposition = format!("attachment; filename=\"{}.tsv\"", set.owner());
    Ok((
        [(header::CONTENT_TYPE, "text/tab-separated-values; charset=utf-8".to_string()), (header::CONTENT_DISPOSITION, disposition)],
        set.to_tsv(),
    )
        .into_response())
}

async fn progress(State(store): State<SharedStore>) -> Result<Response, ServiceError> {
    let p = with_store(store, |s| s.progress()).await?;
    Ok(Json(p).into_response())
}

async fn preview(State(store): State<SharedStore>, Path(file): Path<String>) -> Result<Response, ServiceError> {
    let model = file.strip_suffix(".xyz").ok_or_else(|| ServiceError::UnknownModel(file.clone()))?.to_string();
    let path = with_store(store, move |s| s.preview_path(&model)).await?;
    let body = tokio::task::spawn_blocking(move || std::fs::read(&path))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
        .map_err(|e| ServiceError::Internal(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], body).into_response())
}
