use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::store::{Choice, ExportFilter, NewSession, SessionError, SessionStore};

impl SessionError {
    fn status(&self) -> StatusCode {
        match self {
            SessionError::UnknownSession(_) => StatusCode::NOT_FOUND,
            SessionError::OutOfOrder { .. } | SessionError::NotActive(_) | SessionError::Conflict(_) => {
                StatusCode::CONFLICT
            }
            SessionError::InvalidEdge(_)
            | SessionError::MissingScaffold
            | SessionError::UnexpectedScaffold
            | SessionError::InvalidScaffold
            | SessionError::BadCondition(_) => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::Stimulus(_) | SessionError::Corrupt { .. } | SessionError::Io(_) | SessionError::Json(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }

    fn code(&self) -> &'static str {
        match self {
            SessionError::UnknownSession(_) => "unknown_session",
            SessionError::OutOfOrder { .. } => "out_of_order",
            SessionError::NotActive(_) => "not_active",
            SessionError::InvalidEdge(_) => "invalid_edge",
            SessionError::MissingScaffold => "missing_scaffold",
            SessionError::UnexpectedScaffold => "unexpected_scaffold",
            SessionError::InvalidScaffold => "invalid_scaffold",
            SessionError::Conflict(_) => "conflict",
            SessionError::BadCondition(_) => "bad_condition",
            _ => "internal",
        }
    }
}

impl IntoResponse for SessionError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(json!({ "error": self.code(), "message": self.to_string() }))).into_response()
    }
}

type Shared = Arc<SessionStore>;

async fn create(State(store): State<Shared>, Json(req): Json<NewSession>) -> Result<impl IntoResponse, SessionError> {
    Ok((StatusCode::CREATED, Json(store.create(req)?)))
}

async fn summary(State(store): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, SessionError> {
    Ok(Json(store.with_session(&id, |s| s.summary())?))
}

async fn trial(
    State(store): State<Shared>,
    Path((id, n)): Path<(String, usize)>,
) -> Result<impl IntoResponse, SessionError> {
    Ok(Json(store.with_session(&id, |s| s.trial(n))??))
}

async fn choice(
    State(store): State<Shared>,
    Path((id, n)): Path<(String, usize)>,
    Json(choice): Json<Choice>,
) -> Result<impl IntoResponse, SessionError> {
    Ok(Json(store.with_session(&id, |s| s.post_choice(n, choice))??))
}

async fn abandon(State(store): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, SessionError> {
    Ok(Json(store.with_session(&id, |s| s.abandon())??))
}

#[derive(Deserialize)]
struct ExportQuery {
    #[serde(default)]
    filter: ExportFilter,
}

/// Newline-delimited `SubjectDataset` records.
async fn export(State(store): State<Shared>, Query(q): Query<ExportQuery>) -> Result<Response, SessionError> {
    let mut body = String::new();
    for d in store.export(q.filter) {
        body.push_str(&serde_json::to_string(&d)?);
        body.push('\n');
    }
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

/// The HTTP API, optionally serving a static front end from `ui_dir`.
pub fn router(store: Shared, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(summary))
        .route("/sessions/{id}/trials/{n}", get(trial))
        .route("/sessions/{id}/trials/{n}/choice", post(choice))
        .route("/sessions/{id}/abandon", post(abandon))
        .route("/export", get(export))
        .with_state(store);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}
