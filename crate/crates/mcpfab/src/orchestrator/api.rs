//! HTTP session API used by the operator console.
//!
//! | route | |
//! |---|---|
//! | `POST /sessions` `{task}` | start a session, returns `{id}` |
//! | `GET /sessions` | id and status of every session |
//! | `GET /sessions/{id}/events?from=N` | NDJSON event stream, ends after the terminal event |
//! | `POST /sessions/{id}/clarification` `{answer}` | answer the pending question |
//! | `GET /plant` | plant snapshot read from the device bus |

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::future::{BoxFuture, FutureExt};
use futures::stream;
use mcpfab_core::trace::{EventKind, TaskSpec};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::oneshot;

use super::{discover, run_session, Clarifier, Planner, Question, SessionLog, SessionOptions};
use crate::config::ServerEntry;
use crate::devicebus::BusClient;
use crate::server::{spawn_router, ServerHandle};

struct Session {
    log: Arc<SessionLog>,
    pending: Arc<Mutex<Option<oneshot::Sender<String>>>>,
}

/// Holds the answer slot of the one question a session may have open.
struct ApiClarifier {
    pending: Arc<Mutex<Option<oneshot::Sender<String>>>>,
}

impl Clarifier for ApiClarifier {
    fn ask(&self, _question: &Question) -> BoxFuture<'static, Option<String>> {
        let (tx, rx) = oneshot::channel();
        if let Ok(mut slot) = self.pending.lock() {
            *slot = Some(tx);
        }
        async move { rx.await.ok() }.boxed()
    }
}

/// Session registry plus everything needed to start new sessions.
pub struct Orchestrator {
    servers: Vec<ServerEntry>,
    planner: Arc<dyn Planner>,
    options: SessionOptions,
    bus: Option<BusClient>,
    sessions: Mutex<BTreeMap<String, Arc<Session>>>,
    next_id: AtomicU64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Running,
    AwaitingClarification,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub status: SessionStatus,
    pub events: usize,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AnswerError {
    #[error("no such session")]
    UnknownSession,
    #[error("session is not waiting for a clarification")]
    NotPending,
}

impl Orchestrator {
    pub fn new(
        servers: Vec<ServerEntry>,
        planner: Arc<dyn Planner>,
        options: SessionOptions,
        bus: Option<BusClient>,
    ) -> Arc<Self> {
        Arc::new(Self {
            servers,
            planner,
            options,
            bus,
            sessions: Mutex::new(BTreeMap::new()),
            next_id: AtomicU64::new(1),
        })
    }

    fn session(&self, id: &str) -> Option<Arc<Session>> {
        self.sessions.lock().ok()?.get(id).cloned()
    }

    /// Starts a session in the background. Each session discovers the
    /// servers afresh, so its catalog reflects what is reachable now.
    pub fn start(self: &Arc<Self>, task: TaskSpec) -> String {
        let id = format!("s{}", self.next_id.fetch_add(1, Ordering::SeqCst));
        let session = Arc::new(Session {
            log: SessionLog::new(id.clone()),
            pending: Arc::new(Mutex::new(None)),
        });
        if let Ok(mut sessions) = self.sessions.lock() {
            sessions.insert(id.clone(), session.clone());
        }
        let this = self.clone();
        tokio::spawn(async move {
            let discovery = discover(&this.servers).await;
            let clarifier = ApiClarifier {
                pending: session.pending.clone(),
            };
            run_session(&session.log, task, &discovery, this.planner.as_ref(), &clarifier, this.options).await;
        });
        id
    }

    pub fn answer(&self, id: &str, answer: String) -> Result<(), AnswerError> {
        let session = self.session(id).ok_or(AnswerError::UnknownSession)?;
        // taking the sender makes concurrent answers race for one slot
        let sender = session.pending.lock().ok().and_then(|mut p| p.take());
        match sender {
            Some(tx) => tx.send(answer).map_err(|_| AnswerError::NotPending),
            None => Err(AnswerError::NotPending),
        }
    }

    pub fn list(&self) -> Vec<SessionSummary> {
        let sessions: Vec<(String, Arc<Session>)> = match self.sessions.lock() {
            Ok(s) => s.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            Err(_) => return Vec::new(),
        };
        sessions
            .into_iter()
            .map(|(id, s)| {
                let trace = s.log.snapshot();
                let status = match trace.events.last().map(|e| &e.kind) {
                    Some(EventKind::Done { .. }) => SessionStatus::Done,
                    Some(EventKind::Failed { .. }) => SessionStatus::Failed,
                    Some(EventKind::ClarificationRequest { .. }) => SessionStatus::AwaitingClarification,
                    _ => SessionStatus::Running,
                };
                SessionSummary {
                    id,
                    status,
                    events: trace.events.len(),
                }
            })
            .collect()
    }

    pub fn router(self: &Arc<Self>) -> Router {
        Router::new()
            .route("/sessions", post(create_session).get(list_sessions))
            .route("/sessions/{id}/events", get(stream_events))
            .route("/sessions/{id}/clarification", post(post_clarification))
            .route("/plant", get(plant))
            .with_state(self.clone())
    }

    pub async fn serve(self: &Arc<Self>, addr: SocketAddr) -> std::io::Result<ServerHandle> {
        spawn_router(addr, self.router()).await
    }
}

#[derive(Deserialize)]
struct CreateSession {
    task: TaskSpec,
}

#[derive(Deserialize)]
struct Answer {
    answer: String,
}

#[derive(Deserialize)]
struct From {
    #[serde(default)]
    from: usize,
}

fn error(status: StatusCode, message: &str) -> Response {
    (status, Json(json!({ "error": message }))).into_response()
}

async fn create_session(State(orch): State<Arc<Orchestrator>>, Json(body): Json<CreateSession>) -> Response {
    let id = orch.start(body.task);
    (StatusCode::CREATED, Json(json!({ "id": id }))).into_response()
}

async fn list_sessions(State(orch): State<Arc<Orchestrator>>) -> Response {
    Json(orch.list()).into_response()
}

async fn stream_events(
    State(orch): State<Arc<Orchestrator>>,
    Path(id): Path<String>,
    Query(q): Query<From>,
) -> Response {
    let Some(session) = orch.session(&id) else {
        return error(StatusCode::NOT_FOUND, "no such session");
    };
    let log = session.log.clone();
    let events = stream::unfold((log, q.from, false), |(log, seen, done)| async move {
        if done {
            return None;
        }
        loop {
            let batch = log.events_from(seen);
            if !batch.is_empty() {
                let finished = batch.iter().any(|e| e.kind.is_terminal());
                let mut body = String::new();
                for e in &batch {
                    body.push_str(&e.to_line());
                    body.push('\n');
                }
                let next = seen + batch.len();
                return Some((Ok::<_, Infallible>(Bytes::from(body)), (log, next, finished)));
            }
            if log.is_finished() {
                return None;
            }
            log.wait_beyond(seen).await;
        }
    });
    (
        StatusCode::OK,
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        Body::from_stream(events),
    )
        .into_response()
}

async fn post_clarification(
    State(orch): State<Arc<Orchestrator>>,
    Path(id): Path<String>,
    Json(body): Json<Answer>,
) -> Response {
    match orch.answer(&id, body.answer) {
        Ok(()) => Json(json!({ "accepted": true })).into_response(),
        Err(AnswerError::UnknownSession) => error(StatusCode::NOT_FOUND, "no such session"),
        Err(AnswerError::NotPending) => error(StatusCode::CONFLICT, "session is not waiting for a clarification"),
    }
}

async fn plant(State(orch): State<Arc<Orchestrator>>) -> Response {
    let Some(bus) = &orch.bus else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "no device bus configured");
    };
    match bus.snapshot().await {
        Ok(snapshot) => Json(snapshot).into_response(),
        Err(e) => error(StatusCode::BAD_GATEWAY, &e.to_string()),
    }
}
