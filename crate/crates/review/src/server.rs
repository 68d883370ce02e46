//! HTTP front end. Reviewers identify themselves with `X-Reviewer`.

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;

use crate::model::{CandidateItem, Correction, DecisionInput, ItemState, RegenJob, ReviewDecision};
use crate::queue::ReviewQueue;
use crate::ReviewError;

pub const REVIEWER_HEADER: &str = "x-reviewer";

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let status = match &e {
            ReviewError::UnknownPair(_) | ReviewError::UnknownJob(_) => StatusCode::NOT_FOUND,
            ReviewError::NotLeased { .. } | ReviewError::LeaseExpired(_) | ReviewError::AlreadyDecided(_) => {
                StatusCode::CONFLICT
            }
            ReviewError::InvalidDecision(_)
            | ReviewError::InvalidStrength(_)
            | ReviewError::AcceptRefused { .. }
            | ReviewError::InvalidPairId(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

fn reviewer(headers: &HeaderMap) -> Result<String, ApiError> {
    headers
        .get(REVIEWER_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(str::to_string)
        .ok_or_else(|| ApiError(StatusCode::BAD_REQUEST, "missing X-Reviewer header".into()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ReviewError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiError::from)
}

async fn healthz() -> &'static str {
    "ok"
}

async fn next(State(q): State<Arc<ReviewQueue>>, headers: HeaderMap) -> Result<Response, ApiError> {
    let who = reviewer(&headers)?;
    let leased = blocking(move || Ok(q.next_candidate(&who))).await?;
    Ok(match leased {
        Some(c) => Json(c).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn decision(
    State(q): State<Arc<ReviewQueue>>,
    headers: HeaderMap,
    Json(input): Json<DecisionInput>,
) -> Result<Response, ApiError> {
    let who = reviewer(&headers)?;
    let outcome = blocking(move || q.submit_decision(&who, input)).await?;
    Ok(Json(outcome).into_response())
}

async fn stats(State(q): State<Arc<ReviewQueue>>) -> Response {
    Json(q.stats()).into_response()
}

async fn jobs(State(q): State<Arc<ReviewQueue>>) -> Response {
    Json(q.snapshot().state.jobs().to_vec()).into_response()
}

#[derive(Serialize)]
struct Images {
    prog: String,
    candidate: String,
}

#[derive(Serialize)]
struct PairView {
    item: CandidateItem,
    state: ItemState,
    auto_reject_suggested: bool,
    visual_review_blocked: bool,
    decision: Option<ReviewDecision>,
    correction: Option<Correction>,
    regenerations: Vec<RegenJob>,
    images: Images,
}

async fn pair(State(q): State<Arc<ReviewQueue>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let snap = q.snapshot();
    let state = &snap.state;
    let item = state.item(&id).cloned().ok_or(ReviewError::UnknownPair(id.clone()))?;
    let view = PairView {
        state: state.state_of(&id).expect("known item"),
        auto_reject_suggested: item.auto_reject_suggested(),
        visual_review_blocked: item.visual_review_blocked(),
        decision: state.decision_for(&id).cloned(),
        correction: state.correction(&id).cloned(),
        regenerations: state.jobs().iter().filter(|j| j.parent_pair_id == id).cloned().collect(),
        images: Images {
            prog: format!("/pair/{id}/prog.png"),
            candidate: format!("/pair/{id}/candidate.png"),
        },
        item,
    };
    Ok(Json(view).into_response())
}

async fn png(q: Arc<ReviewQueue>, id: String, prog: bool) -> Result<Response, ApiError> {
    let snap = q.snapshot();
    let item = snap.state.item(&id).ok_or(ReviewError::UnknownPair(id.clone()))?;
    let path = if prog { item.prog_path.clone() } else { item.candidate_path.clone() };
    let bytes = blocking(move || {
        std::fs::read(&path).map_err(|source| ReviewError::Io { path, source })
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

async fn prog_png(State(q): State<Arc<ReviewQueue>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    png(q, id, true).await
}

async fn candidate_png(State(q): State<Arc<ReviewQueue>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    png(q, id, false).await
}

pub fn router(queue: Arc<ReviewQueue>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/queue/next", get(next))
        .route("/decision", post(decision))
        .route("/stats", get(stats))
        .route("/jobs", get(jobs))
        .route("/pair/{id}", get(pair))
        .route("/pair/{id}/prog.png", get(prog_png))
        .route("/pair/{id}/candidate.png", get(candidate_png))
        .with_state(queue)
}

/// Serves until ctrl-c.
pub async fn serve(queue: Arc<ReviewQueue>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("review service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(queue))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
