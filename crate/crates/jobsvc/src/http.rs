//! HTTP routes over [`JobService`].

use crate::feedback::FeedbackEntry;
use crate::service::{Input, JobError, JobService};
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use std::future::Future;
use std::path::PathBuf;
use tower_http::cors::CorsLayer;

impl IntoResponse for JobError {
    fn into_response(self) -> Response {
        let code = match &self {
            JobError::NotFound(_) => StatusCode::NOT_FOUND,
            JobError::BadRequest(_) => StatusCode::BAD_REQUEST,
            JobError::NotReady { .. } => StatusCode::CONFLICT,
            JobError::Storage(_) | JobError::Journal(_) | JobError::Io { .. } => StatusCode::SERVICE_UNAVAILABLE,
            JobError::Env(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (code, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

fn bad(msg: impl std::fmt::Display) -> JobError {
    JobError::BadRequest(msg.to_string())
}

pub fn router(svc: JobService) -> Router {
    let limit = svc.config().max_upload_bytes;
    Router::new()
        .route("/schedule", post(schedule))
        .route("/query", get(query))
        .route("/bundle", get(bundle))
        .route("/feedback", post(feedback))
        .route("/feedback/summary", get(feedback_summary))
        .route("/stats", get(stats))
        .route("/health", get(|| async { "ok" }))
        .layer(DefaultBodyLimit::max(limit))
        .layer(CorsLayer::permissive())
        .with_state(svc)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    svc: JobService,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(svc)).with_graceful_shutdown(shutdown).await
}

#[derive(Deserialize)]
struct PathRequest {
    path: PathBuf,
    #[serde(default)]
    overrides: Vec<String>,
}

/// multipart: every part with a filename is a file, parts named `set`
/// carry `section.key=value` overrides. JSON: `{path, overrides?}`.
async fn schedule(State(svc): State<JobService>, req: Request) -> Result<Response, JobError> {
    let multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let (input, overrides) = if multipart {
        let mut form = Multipart::from_request(req, &()).await.map_err(bad)?;
        let (mut files, mut overrides) = (Vec::new(), Vec::new());
        while let Some(field) = form.next_field().await.map_err(bad)? {
            match (field.file_name().map(str::to_owned), field.name()) {
                (Some(name), _) => files.push((name, field.bytes().await.map_err(bad)?.to_vec())),
                (None, Some("set")) => overrides.push(field.text().await.map_err(bad)?),
                _ => {}
            }
        }
        (Input::Files(files), overrides)
    } else {
        let Json(r) = Json::<PathRequest>::from_request(req, &()).await.map_err(|e| bad(e.body_text()))?;
        (Input::Path(r.path), r.overrides)
    };
    let job = tokio::task::spawn_blocking(move || svc.schedule(input, overrides))
        .await
        .map_err(|e| bad(format!("scheduling aborted: {e}")))??;
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job.job_id, "status": job.status }))).into_response())
}

#[derive(Deserialize)]
struct JobQuery {
    job_id: Option<String>,
}

impl JobQuery {
    fn id(self) -> Result<String, JobError> {
        self.job_id.filter(|s| !s.is_empty()).ok_or_else(|| bad("missing job_id"))
    }
}

async fn query(State(svc): State<JobService>, Query(q): Query<JobQuery>) -> Result<Response, JobError> {
    Ok(Json(svc.query(&q.id()?)?).into_response())
}

async fn bundle(State(svc): State<JobService>, Query(q): Query<JobQuery>) -> Result<Response, JobError> {
    let id = q.id()?;
    let bytes = tokio::task::spawn_blocking(move || svc.bundle(&id)).await.map_err(bad)??;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn feedback(State(svc): State<JobService>, body: Result<Json<FeedbackEntry>, axum::extract::rejection::JsonRejection>) -> Result<Response, JobError> {
    let Json(entry) = body.map_err(|e| bad(e.body_text()))?;
    let job_id = entry.job_id.clone();
    svc.submit_feedback(entry)?;
    Ok(Json(json!({ "ok": true, "job_id": job_id })).into_response())
}

async fn feedback_summary(State(svc): State<JobService>) -> Response {
    Json(svc.feedback_summary()).into_response()
}

async fn stats(State(svc): State<JobService>) -> Result<Response, JobError> {
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], svc.usage_snapshot()?).into_response())
}
