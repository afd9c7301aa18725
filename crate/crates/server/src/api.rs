//! Routes under `/api`. Each session is owned by one async mutex; the
//! operation itself (including any provider call) runs on the blocking pool
//! while the lock is held, so requests to one session are serialized and
//! other sessions proceed in parallel.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::multipart::MultipartError;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use parley_core::annotation::Label;
use parley_core::catalog;
use parley_core::conflict_model::Speaker;
use parley_core::session::Session;
use parley_core::workflow::{SessionView, Workflow, WorkflowResult};

use crate::error::ApiError;

type Slot = Arc<tokio::sync::Mutex<Option<Session>>>;

#[derive(Clone)]
pub struct AppState {
    workflow: Arc<Workflow>,
    slots: Arc<Mutex<HashMap<String, Slot>>>,
}

impl AppState {
    pub fn new(workflow: Workflow) -> Self {
        AppState {
            workflow: Arc::new(workflow),
            slots: Arc::default(),
        }
    }

    pub fn workflow(&self) -> &Workflow {
        &self.workflow
    }

    fn slot(&self, id: &str) -> Result<Slot, ApiError> {
        let mut slots = self.slots.lock().expect("slot map lock");
        if let Some(slot) = slots.get(id) {
            return Ok(slot.clone());
        }
        if !self.workflow.store().exists(id) {
            return Err(ApiError::new(
                StatusCode::NOT_FOUND,
                "session_not_found",
                format!("session {id} not found"),
            ));
        }
        let slot = Slot::default();
        slots.insert(id.to_string(), slot.clone());
        Ok(slot)
    }

    /// Runs `op` on the session with exclusive ownership.
    async fn with_session<T, F>(&self, id: &str, op: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&Workflow, &mut Session) -> WorkflowResult<T> + Send + 'static,
    {
        let mut guard = self.slot(id)?.lock_owned().await;
        let workflow = self.workflow.clone();
        let id = id.to_string();
        tokio::task::spawn_blocking(move || {
            if guard.is_none() {
                *guard = Some(workflow.load(&id)?);
            }
            op(&workflow, guard.as_mut().expect("loaded"))
        })
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(ApiError::from)
    }
}

/// Upper bound for a screenshot upload request.
pub fn upload_body_limit() -> usize {
    let limits = parley_core::ingestion::UploadLimits::default();
    limits.max_images * limits.max_image_bytes + (1 << 20)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/catalogs", get(list_catalogs))
        .route("/api/catalogs/{name}", get(get_catalog))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route(
            "/api/sessions/{id}/screenshots",
            post(upload_screenshots).layer(DefaultBodyLimit::max(upload_body_limit())),
        )
        .route("/api/sessions/{id}/estimates", post(estimates))
        .route("/api/sessions/{id}/questionnaire/{partner}", put(adjust_questionnaire))
        .route("/api/sessions/{id}/finalize-styles", post(finalize_styles))
        .route("/api/sessions/{id}/dialogue", post(generate_dialogue))
        .route("/api/sessions/{id}/annotations", post(annotate))
        .route("/api/sessions/{id}/annotation-summary", get(annotation_summary))
        .route("/api/sessions/{id}/reset-points", get(reset_points))
        .route("/api/sessions/{id}/practice/reset", post(practice_reset))
        .route("/api/sessions/{id}/practice/turns", post(practice_turn))
        .route("/api/sessions/{id}/close", post(close_session))
        .fallback(|| async { ApiError::not_found("no such route") })
        .with_state(state)
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::invalid("invalid_body", e.to_string()))
}

async fn list_catalogs() -> Json<Vec<&'static str>> {
    Json(catalog::CATALOG_NAMES.to_vec())
}

async fn get_catalog(Path(name): Path<String>) -> Result<Response, ApiError> {
    let raw = catalog::raw(&name).ok_or_else(|| ApiError::not_found(format!("catalog {name} not found")))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], raw).into_response())
}

async fn create_session(State(state): State<AppState>) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let workflow = state.workflow.clone();
    let session = tokio::task::spawn_blocking(move || workflow.create())
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok((StatusCode::CREATED, Json(SessionView::of(&session))))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    state.with_session(&id, |_, s| Ok(SessionView::of(s))).await.map(Json)
}

fn upload_error(e: MultipartError) -> ApiError {
    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", e.body_text())
    } else {
        ApiError::invalid("invalid_upload", e.body_text())
    }
}

async fn upload_screenshots(
    State(state): State<AppState>,
    Path(id): Path<String>,
    mut multipart: Multipart,
) -> Result<impl IntoResponse, ApiError> {
    let mut images = Vec::new();
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(upload_error)?
    {
        let bytes = field
            .bytes()
            .await
            .map_err(upload_error)?;
        images.push(bytes.to_vec());
    }
    let result = state.with_session(&id, move |wf, s| wf.upload_screenshots(s, &images)).await?;
    Ok(Json(result))
}

async fn estimates(State(state): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(state.with_session(&id, |wf, s| wf.estimate(s)).await?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ItemEdit {
    index: usize,
    score: i64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdjustRequest {
    edits: Vec<ItemEdit>,
}

async fn adjust_questionnaire(
    State(state): State<AppState>,
    Path((id, partner)): Path<(String, String)>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let partner: Speaker = partner
        .parse()
        .map_err(|_| ApiError::invalid("invalid_partner", format!("unknown partner {partner:?}")))?;
    let req: AdjustRequest = parse_body(&body)?;
    let edits: Vec<(usize, i64)> = req.edits.iter().map(|e| (e.index, e.score)).collect();
    let response = state
        .with_session(&id, move |wf, s| wf.adjust_questionnaire(s, partner, &edits))
        .await?;
    Ok(Json(response))
}

async fn finalize_styles(State(state): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(state.with_session(&id, |wf, s| wf.finalize_styles(s)).await?))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DialogueRequest {
    topic: Option<String>,
}

async fn generate_dialogue(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let req: DialogueRequest = if body.iter().all(u8::is_ascii_whitespace) {
        DialogueRequest::default()
    } else {
        parse_body(&body)?
    };
    let dialogue = state
        .with_session(&id, move |wf, s| wf.generate_dialogue(s, req.topic.as_deref()))
        .await?;
    Ok(Json(dialogue))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotateRequest {
    turn_index: usize,
    label: Label,
}

async fn annotate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let req: AnnotateRequest = parse_body(&body)?;
    let record = state
        .with_session(&id, move |wf, s| wf.annotate(s, req.turn_index, req.label))
        .await?;
    Ok(Json(record))
}

async fn annotation_summary(State(state): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(state.with_session(&id, |wf, s| wf.annotation_summary(s)).await?))
}

async fn reset_points(State(state): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(state.with_session(&id, |wf, s| wf.reset_points(s)).await?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResetRequest {
    turn_index: usize,
}

async fn practice_reset(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let req: ResetRequest = parse_body(&body)?;
    Ok(Json(state.with_session(&id, move |wf, s| wf.reset(s, req.turn_index)).await?))
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct PracticeRequest {
    text: String,
    #[serde(default)]
    dry_run: bool,
}

async fn practice_turn(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let req: PracticeRequest = parse_body(&body)?;
    let result = state
        .with_session(&id, move |wf, s| wf.practice_turn(s, &req.text, req.dry_run))
        .await?;
    Ok(Json(result))
}

async fn close_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let view = state
        .with_session(&id, |wf, s| {
            wf.close(s)?;
            Ok(SessionView::of(s))
        })
        .await?;
    Ok(Json(view))
}
