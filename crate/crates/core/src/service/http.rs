use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use tracing::error;

use crate::session::to_jsonl;
use crate::stage::Stage;

use super::{CreateSession, EvalRequest, ServiceError, SessionManager};

type Shared = Arc<SessionManager>;

impl ServiceError {
    fn status(&self) -> (StatusCode, &'static str) {
        match self {
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ServiceError::Busy(_) => (StatusCode::CONFLICT, "turn_in_flight"),
            ServiceError::Closed(_) => (StatusCode::GONE, "session_closed"),
            ServiceError::Backend(_) => (StatusCode::BAD_GATEWAY, "backend_unavailable"),
            ServiceError::BadRequest(_) => (StatusCode::BAD_REQUEST, "invalid_request"),
            ServiceError::Eval(crate::eval::EvalError::Persona(_)) => (StatusCode::BAD_REQUEST, "invalid_personas"),
            ServiceError::Store(_) | ServiceError::Eval(_) | ServiceError::Internal(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, code) = self.status();
        if status.is_server_error() {
            error!(error = %self, "request failed");
        }
        (status, Json(json!({ "error": code, "message": self.to_string() }))).into_response()
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("body: {e}")))
}

/// Runs blocking manager work off the async executor.
async fn blocking<T, F>(f: F) -> Result<T, ServiceError>
where
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(format!("worker panicked: {e}")))?
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageBody {
    text: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OverrideBody {
    stage: Stage,
    operator_note: String,
}

async fn create(State(m): State<Shared>, body: Bytes) -> Result<Response, ServiceError> {
    let req: CreateSession = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSession::default()
    } else {
        parse_body(&body)?
    };
    let created = blocking(move || m.create(req)).await?;
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

async fn message(State(m): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Response, ServiceError> {
    let req: MessageBody = parse_body(&body)?;
    let result = blocking(move || m.handle_message(&id, &req.text)).await?;
    Ok(Json(result).into_response())
}

async fn state(State(m): State<Shared>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let state = blocking(move || m.state(&id)).await?;
    Ok(Json(state).into_response())
}

async fn transcript(State(m): State<Shared>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let events = blocking(move || m.transcript(&id)).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], to_jsonl(&events)).into_response())
}

async fn stage_override(
    State(m): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ServiceError> {
    let req: OverrideBody = parse_body(&body)?;
    let applied = blocking(move || m.override_stage(&id, req.stage, &req.operator_note)).await?;
    Ok(Json(applied).into_response())
}

async fn eval_run(State(m): State<Shared>, body: Bytes) -> Result<Response, ServiceError> {
    let req: EvalRequest = parse_body(&body)?;
    let report = blocking(move || m.run_eval(&req)).await?;
    Ok(Json(report).into_response())
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

/// The HTTP API over `manager`.
pub fn router(manager: Shared) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/sessions", post(create))
        .route("/v1/sessions/{id}/messages", post(message))
        .route("/v1/sessions/{id}/state", get(state))
        .route("/v1/sessions/{id}/transcript", get(transcript))
        .route("/v1/sessions/{id}/stage_override", post(stage_override))
        .route("/v1/eval/run", post(eval_run))
        .with_state(manager)
}

/// Serves the API on `listener` until the future is dropped.
pub async fn serve(listener: tokio::net::TcpListener, manager: Shared) -> std::io::Result<()> {
    axum::serve(listener, router(manager)).await
}
