//! HTTP API over a [`ProposalStore`].
//!
//! Every success body is `{"data": ..., "next_cursor"?: ...}`; every failure is
//! `{"error": {"code", "message"}}`.

use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::Error;
use crate::kg::{EntityId, PropertyId};
use crate::proposals::{
    Action, ExportFormat, FactProposal, ListFilter, ProposalStore, ReviewDecision, StatementFile, Status,
    DEFAULT_PAGE_SIZE,
};

pub type SharedStore = Arc<RwLock<ProposalStore>>;

pub const REVIEWER_HEADER: &str = "x-reviewer";

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            code: "invalid_request",
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            Error::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            Error::Precondition(_) | Error::InvalidProposal { .. } | Error::Json(_) => {
                (StatusCode::BAD_REQUEST, "invalid_request")
            }
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self {
            status,
            code,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult = std::result::Result<Response, ApiError>;

fn ok(data: impl Serialize) -> ApiResult {
    Ok(Json(json!({ "data": data })).into_response())
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> std::result::Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

fn read(store: &SharedStore) -> std::sync::RwLockReadGuard<'_, ProposalStore> {
    store.read().unwrap_or_else(|p| p.into_inner())
}

fn write(store: &SharedStore) -> std::sync::RwLockWriteGuard<'_, ProposalStore> {
    store.write().unwrap_or_else(|p| p.into_inner())
}

#[derive(Debug, Default, Deserialize)]
struct ListParams {
    status: Option<String>,
    subject: Option<String>,
    domain: Option<String>,
    cursor: Option<String>,
    limit: Option<usize>,
}

fn nonempty(s: Option<String>) -> Option<String> {
    s.filter(|s| !s.is_empty())
}

async fn list(State(store): State<SharedStore>, Query(q): Query<ListParams>) -> ApiResult {
    let filter = ListFilter {
        status: nonempty(q.status).map(|s| s.parse::<Status>()).transpose()?,
        subject: nonempty(q.subject).map(EntityId::new).transpose()?,
        domain: nonempty(q.domain).map(PropertyId::new).transpose()?,
    };
    let cursor = nonempty(q.cursor);
    let page = read(&store).list(&filter, cursor.as_deref(), q.limit.unwrap_or(DEFAULT_PAGE_SIZE))?;
    let mut body = json!({ "data": page.items });
    if let Some(c) = page.next_cursor {
        body["next_cursor"] = Value::String(c);
    }
    Ok(Json(body).into_response())
}

async fn get_one(State(store): State<SharedStore>, Path(id): Path<String>) -> ApiResult {
    ok(read(&store).get(&id)?)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SubmitBody {
    Wrapped { proposals: Vec<FactProposal> },
    Bare(Vec<FactProposal>),
}

async fn submit(State(store): State<SharedStore>, body: Bytes) -> ApiResult {
    let proposals = match parse_body::<SubmitBody>(&body)? {
        SubmitBody::Wrapped { proposals } | SubmitBody::Bare(proposals) => proposals,
    };
    ok(write(&store).submit(proposals)?)
}

#[derive(Deserialize)]
struct DecisionBody {
    action: Action,
    #[serde(default)]
    reviewer: Option<String>,
    #[serde(default)]
    note: Option<String>,
}

async fn decide(
    State(store): State<SharedStore>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult {
    let b: DecisionBody = parse_body(&body)?;
    let reviewer = nonempty(b.reviewer)
        .or_else(|| {
            headers
                .get(REVIEWER_HEADER)
                .and_then(|v| v.to_str().ok())
                .map(str::to_string)
        })
        .ok_or_else(|| ApiError::bad_request("reviewer missing (body field or X-Reviewer header)"))?;
    let decision = ReviewDecision {
        proposal_id: id,
        action: b.action,
        reviewer,
        note: b.note,
    };
    ok(write(&store).decide(decision)?)
}

#[derive(Deserialize)]
struct ExportParams {
    format: Option<String>,
}

async fn export(State(store): State<SharedStore>, Query(q): Query<ExportParams>) -> ApiResult {
    let format: ExportFormat = q.format.as_deref().unwrap_or("json").parse()?;
    let text = read(&store).export(format)?;
    match format {
        ExportFormat::Json => ok(serde_json::from_str::<StatementFile>(&text).map_err(Error::from)?),
        ExportFormat::QuickStatements => ok(text),
    }
}

async fn health(State(store): State<SharedStore>) -> ApiResult {
    ok(json!({ "status": "ok", "proposals": read(&store).state().len() }))
}

async fn fallback() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        code: "not_found",
        message: "no such route".into(),
    }
}

pub fn router(store: SharedStore) -> Router {
    Router::new()
        .route("/proposals", get(list).post(submit))
        .route("/proposals/{id}", get(get_one))
        .route("/proposals/{id}/decision", post(decide))
        .route("/export", get(export))
        .route("/health", get(health))
        .fallback(fallback)
        .with_state(store)
}

/// Serve until the process ends.
pub async fn serve(store: SharedStore, addr: SocketAddr) -> crate::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::Transport(format!("bind {addr}: {e}")))?;
    axum::serve(listener, router(store))
        .await
        .map_err(|e| Error::Transport(e.to_string()))
}

/// A server on a background thread, stopped on drop.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Bind `addr` (port 0 picks a free port) and serve on a background thread.
pub fn spawn(store: SharedStore, addr: SocketAddr) -> crate::Result<ServerHandle> {
    let std_listener = std::net::TcpListener::bind(addr).map_err(|e| Error::Transport(format!("bind {addr}: {e}")))?;
    std_listener
        .set_nonblocking(true)
        .map_err(|e| Error::Transport(e.to_string()))?;
    let local = std_listener.local_addr().map_err(|e| Error::Transport(e.to_string()))?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .expect("tokio runtime");
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener");
            let _ = axum::serve(listener, router(store))
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
    });
    Ok(ServerHandle {
        addr: local,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
