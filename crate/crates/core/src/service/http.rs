use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::Deserialize;
use serde_json::json;
use tokio_stream::wrappers::BroadcastStream;
use tower_http::services::{ServeDir, ServeFile};

use super::{ChatService, ServiceError, StreamItem};

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::TurnInProgress(_) => StatusCode::CONFLICT,
            ServiceError::EmptyMessage => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::StorageFailure(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

/// Serves `app` until the process is stopped.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app).await
}

/// Routes of the chat service. Static UI assets are served from `ui_dir`
/// when given.
pub fn router(service: Arc<ChatService>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/healthz", get(healthz))
        .route("/schema", get(schema))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(transcript))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/events", get(events))
        .with_state(service);
    match ui_dir {
        Some(dir) => {
            let index = dir.join("index.html");
            api.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(index)))
        }
        None => api,
    }
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn schema(State(service): State<Arc<ChatService>>) -> Response {
    ([(header::CONTENT_TYPE, "text/markdown; charset=utf-8")], service.schema_markdown().to_string()).into_response()
}

async fn create_session(State(service): State<Arc<ChatService>>) -> Result<Response, ServiceError> {
    let summary = service.create_session()?;
    Ok((StatusCode::CREATED, Json(summary)).into_response())
}

async fn list_sessions(State(service): State<Arc<ChatService>>) -> Result<Response, ServiceError> {
    Ok(Json(service.list_sessions()?).into_response())
}

async fn transcript(State(service): State<Arc<ChatService>>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    Ok(Json(service.transcript(&id)?).into_response())
}

#[derive(Deserialize)]
struct MessageBody {
    text: String,
}

#[derive(Deserialize, Default)]
struct MessageParams {
    #[serde(default)]
    wait: bool,
}

async fn post_message(
    State(service): State<Arc<ChatService>>,
    Path(id): Path<String>,
    Query(params): Query<MessageParams>,
    Json(body): Json<MessageBody>,
) -> Result<Response, ServiceError> {
    let handle = service.post_message(&id, &body.text)?;
    if !params.wait {
        let ticket = json!({ "turn": handle.turn, "first_seq": handle.first_seq });
        return Ok((StatusCode::ACCEPTED, Json(ticket)).into_response());
    }
    let report = handle
        .join
        .await
        .map_err(|e| ServiceError::StorageFailure(format!("turn task failed: {e}")))??;
    Ok(Json(report).into_response())
}

#[derive(Deserialize, Default)]
struct EventParams {
    after: Option<u64>,
}

fn to_sse(item: StreamItem) -> Event {
    match item {
        StreamItem::Event(event) => Event::default()
            .id(event.seq.to_string())
            .event(event.kind_name())
            .data(serde_json::to_string(&event).unwrap_or_default()),
        StreamItem::TurnCompleted(done) => {
            Event::default().event("turn_completed").data(serde_json::to_string(&done).unwrap_or_default())
        }
    }
}

async fn events(
    State(service): State<Arc<ChatService>>,
    Path(id): Path<String>,
    Query(params): Query<EventParams>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ServiceError> {
    let last_event_id =
        headers.get("last-event-id").and_then(|v| v.to_str().ok()).and_then(|v| v.trim().parse::<u64>().ok());
    let (replay, receiver) = service.subscribe(&id, last_event_id.or(params.after))?;
    // a lagging subscriber is disconnected and resumes from its last id
    let live = BroadcastStream::new(receiver)
        .take_while(|item| futures::future::ready(item.is_ok()))
        .filter_map(|item| futures::future::ready(item.ok()));
    let stream = stream::iter(replay).chain(live).map(|item| Ok(to_sse(item)));
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}
