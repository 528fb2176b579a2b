use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, Multipart, Path, Request, State};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use myopia_core::agent::{AgentResponse, Role, TurnInput};
use myopia_core::imagetool::FundusImage;
use myopia_core::Language;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::state::{AppState, ProviderHealth, TurnError, TurnOutcome};
use crate::store::{Entry, StoreError, TranscriptRecord};

pub const CLINIC_TOKEN_HEADER: &str = "x-clinic-token";

#[derive(Debug)]
pub(crate) struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn not_found() -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", "no such session")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": {"code": self.code, "message": self.message}}))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        tracing::error!(error = %e, "transcript store failure");
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "store_unavailable", "the transcript store is unavailable")
    }
}

impl From<TurnError> for ApiError {
    fn from(e: TurnError) -> Self {
        match e {
            TurnError::Rejected(m) => Self::new(StatusCode::BAD_REQUEST, "rejected_turn", m),
            TurnError::Store(s) => s.into(),
            TurnError::Injected => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "turn aborted"),
            TurnError::Internal(m) => {
                tracing::error!(message = %m, "agent configuration error");
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "agent configuration error")
            }
        }
    }
}

fn join_error(e: tokio::task::JoinError) -> ApiError {
    tracing::error!(error = %e, "worker task failed");
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "worker task failed")
}

#[derive(Debug, Deserialize)]
struct CreateSession {
    language: String,
}

#[derive(Debug, Serialize)]
struct SessionCreated {
    session_id: String,
    language: Language,
    created_at: DateTime<Utc>,
}

#[derive(Debug, Serialize)]
struct TurnResponse {
    session_id: String,
    user_seq: u64,
    assistant_seq: u64,
    #[serde(flatten)]
    response: AgentResponse,
}

#[derive(Debug, Serialize)]
struct SessionView {
    session_id: String,
    language: Language,
    created_at: DateTime<Utc>,
    records: Vec<TranscriptRecord>,
}

#[derive(Debug, Serialize)]
struct IndexHealth {
    loaded: bool,
    entries: usize,
}

#[derive(Debug, Serialize)]
struct Providers {
    chat: ProviderHealth,
    embedding: BTreeMap<Language, ProviderHealth>,
    classifier: Option<ProviderHealth>,
}

#[derive(Debug, Serialize)]
struct Health {
    status: &'static str,
    version: &'static str,
    indexes: BTreeMap<Language, IndexHealth>,
    providers: Providers,
}

pub fn router(state: Arc<AppState>) -> Router {
    let body_limit = state.config.max_image_bytes + 1024 * 1024;
    let api = Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session).delete(delete_session))
        .route("/api/sessions/{id}/turns", post(post_turn))
        .route("/api/sessions/{id}/turns/{seq}/trace", get(get_trace))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .route("/api/health", get(health))
        .layer(DefaultBodyLimit::max(body_limit));
    let app = match &state.config.static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api.fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") }),
    };
    app.with_state(state)
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(expected) = &state.clinic_token {
        let given = req.headers().get(CLINIC_TOKEN_HEADER).map(|v| v.as_bytes());
        if given != Some(expected.as_bytes()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong clinic token")
                .into_response();
        }
    }
    next.run(req).await
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: Result<Json<CreateSession>, axum::extract::rejection::JsonRejection>,
) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    let Json(body) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let language: Language = body
        .language
        .parse()
        .map_err(|_| ApiError::bad_request(format!("unsupported language {:?}", body.language)))?;
    let s = state.clone();
    let record = tokio::task::spawn_blocking(move || s.create_session(language)).await.map_err(join_error)??;
    tracing::info!(session_id = %record.session_id, %language, "session created");
    Ok((
        StatusCode::CREATED,
        Json(SessionCreated { session_id: record.session_id, language, created_at: record.timestamp }),
    ))
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<SessionView>, ApiError> {
    let guard = state.lock_session(&id).await?.ok_or_else(ApiError::not_found)?;
    let s = state.clone();
    let records =
        tokio::task::spawn_blocking(move || s.store.load(&id)).await.map_err(join_error)??.ok_or_else(ApiError::not_found)?;
    drop(guard);
    let first = &records[0];
    let language = match first.entry {
        Entry::Created { language } => language,
        _ => return Err(ApiError::not_found()),
    };
    Ok(Json(SessionView {
        session_id: first.session_id.clone(),
        language,
        created_at: first.timestamp,
        records,
    }))
}

async fn delete_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let mut guard = state.lock_session(&id).await?.ok_or_else(ApiError::not_found)?;
    let s = state.clone();
    tokio::task::spawn_blocking(move || s.delete_session(guard.as_mut().expect("loaded slot")))
        .await
        .map_err(join_error)??;
    tracing::info!(session_id = %id, "session deleted");
    Ok(StatusCode::NO_CONTENT)
}

async fn read_turn(mut multipart: Multipart, max_image_bytes: usize) -> Result<TurnInput, ApiError> {
    let too_large = || {
        ApiError::new(StatusCode::BAD_REQUEST, "image_too_large", format!("images are limited to {max_image_bytes} bytes"))
    };
    let mut text: Option<String> = None;
    let mut image: Option<FundusImage> = None;
    loop {
        let field = match multipart.next_field().await {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) if e.status() == StatusCode::PAYLOAD_TOO_LARGE => return Err(too_large()),
            Err(e) => return Err(ApiError::bad_request(e.body_text())),
        };
        match field.name() {
            Some("text") => {
                text = Some(field.text().await.map_err(|e| ApiError::bad_request(e.body_text()))?);
            }
            Some("image") => {
                let reference = field.file_name().unwrap_or("upload").to_string();
                let bytes = field.bytes().await.map_err(|e| {
                    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
                        too_large()
                    } else {
                        ApiError::bad_request(e.body_text())
                    }
                })?;
                if bytes.len() > max_image_bytes {
                    return Err(too_large());
                }
                image = Some(FundusImage::new(reference, bytes.to_vec()));
            }
            other => return Err(ApiError::bad_request(format!("unexpected form field {other:?}"))),
        }
    }
    let text = text.unwrap_or_default();
    if text.trim().is_empty() && image.is_none() {
        return Err(ApiError::bad_request("a turn needs text, an image or both"));
    }
    Ok(TurnInput { text, image })
}

async fn post_turn(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    multipart: Result<Multipart, axum::extract::multipart::MultipartRejection>,
) -> Result<Response, ApiError> {
    let multipart = multipart.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let input = read_turn(multipart, state.config.max_image_bytes).await?;
    let mut guard = state.lock_session(&id).await?.ok_or_else(ApiError::not_found)?;
    let s = state.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        if let Some(img) = &input.image {
            s.accept_image(img)?;
        }
        s.run_turn(guard.as_mut().expect("loaded slot"), input)
    })
    .await
    .map_err(join_error)??;
    match outcome {
        TurnOutcome::Answered { user_seq, assistant_seq, response } => {
            Ok(Json(TurnResponse { session_id: id, user_seq, assistant_seq, response }).into_response())
        }
        TurnOutcome::ProviderFailed { seq, message, trace } => Ok((
            StatusCode::BAD_GATEWAY,
            Json(json!({
                "error": {"code": "provider_error", "message": message},
                "failed_seq": seq,
                "trace": trace,
            })),
        )
            .into_response()),
    }
}

/// The trace of the turn containing `seq`. An answered turn resolves from
/// either its user or its assistant sequence number; a failed turn resolves
/// from its marker and carries the tool results gathered before the failure.
async fn get_trace(
    State(state): State<Arc<AppState>>,
    Path((id, seq)): Path<(String, u64)>,
) -> Result<Response, ApiError> {
    let guard = state.lock_session(&id).await?.ok_or_else(ApiError::not_found)?;
    let s = state.clone();
    let records =
        tokio::task::spawn_blocking(move || s.store.load(&id)).await.map_err(join_error)??.ok_or_else(ApiError::not_found)?;
    drop(guard);
    let at = |n: u64| records.iter().find(|r| r.seq == n).map(|r| &r.entry);
    let trace = match at(seq) {
        Some(Entry::Message { trace: Some(t), .. }) | Some(Entry::FailedTurn { trace: Some(t), .. }) => Some(t),
        Some(Entry::Message { message, trace: None }) if message.role == Role::User => match at(seq + 1) {
            Some(Entry::Message { trace: Some(t), .. }) => Some(t),
            _ => None,
        },
        _ => None,
    };
    match trace {
        Some(t) => Ok(Json(t.clone()).into_response()),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no trace for turn {seq}"))),
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    let report = state.probe().await;
    let indexes: BTreeMap<Language, IndexHealth> = Language::ALL
        .into_iter()
        .map(|l| {
            let idx = state.indexes.get(&l);
            (l, IndexHealth { loaded: idx.is_some(), entries: idx.map_or(0, |i| i.len()) })
        })
        .collect();
    let all_up = report.chat.reachable
        && report.embedding.values().all(|p| p.reachable)
        && report.classifier.as_ref().is_none_or(|c| c.reachable);
    let ok = all_up && indexes.values().all(|i| i.loaded && i.entries > 0);
    Json(Health {
        status: if ok { "ok" } else { "degraded" },
        version: env!("CARGO_PKG_VERSION"),
        indexes,
        providers: Providers { chat: report.chat, embedding: report.embedding, classifier: report.classifier },
    })
}
