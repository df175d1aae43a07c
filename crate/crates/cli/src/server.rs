//! HTTP session service.
//!
//! Sessions live in memory. Each one is guarded by its own mutex; a second
//! mutation arriving while one is in flight gets `409`. Reads are served
//! from a snapshot taken after the last successful mutation, so they never
//! wait on a backend call and never observe a half-finished round. With a
//! persistence directory every snapshot is also written to
//! `<dir>/<session_id>.json` and reloaded at startup.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock, TryLockError};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use vidnav_core::embedding::RefinementParams;
use vidnav_core::navigation::{new_session_id, Answer};
use vidnav_core::{AgentBackend, Session, SessionConfig, VideoIndex};

use crate::api::{
    candidates, Anchor, AnswerRequest, AnswerResponse, ApiError, CreateSessionRequest,
    CreateSessionResponse, ErrorCode, QuestionResponse, RoundView,
};

struct Slot {
    session: Mutex<Session>,
    snapshot: RwLock<Arc<String>>,
}

impl Slot {
    fn new(session: Session) -> Self {
        let snapshot = RwLock::new(Arc::new(session.to_json()));
        Self {
            session: Mutex::new(session),
            snapshot,
        }
    }
}

/// Everything a request handler needs. Cheap to clone.
#[derive(Clone)]
pub struct AppState {
    index: Arc<VideoIndex>,
    backend: Arc<AgentBackend>,
    defaults: SessionConfig,
    sessions: Arc<RwLock<HashMap<String, Arc<Slot>>>>,
    persist_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(index: Arc<VideoIndex>, backend: Arc<AgentBackend>, defaults: SessionConfig) -> Self {
        Self {
            index,
            backend,
            defaults,
            sessions: Arc::default(),
            persist_dir: None,
        }
    }

    /// Enables write-through persistence and loads any sessions already
    /// stored in `dir`.
    pub fn with_persistence(mut self, dir: impl Into<PathBuf>) -> Result<Self, ApiError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut loaded = HashMap::new();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path)?;
            let session = Session::from_json(&text).map_err(|e| {
                ApiError::bad_request(format!("{}: {e}", path.display()))
            })?;
            loaded.insert(session.session_id.clone(), Arc::new(Slot::new(session)));
        }
        self.sessions = Arc::new(RwLock::new(loaded));
        self.persist_dir = Some(dir);
        Ok(self)
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session map").len()
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        self.sessions
            .read()
            .expect("session map")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id:?}")))
    }

    fn persist(&self, session_id: &str, json: &str) -> Result<(), ApiError> {
        if let Some(dir) = &self.persist_dir {
            write_atomic(&dir.join(format!("{session_id}.json")), json)?;
        }
        Ok(())
    }

    /// Runs `f` on the session under its lock, then refreshes the snapshot.
    /// A busy session yields `409` without waiting.
    fn mutate<T>(
        &self,
        slot: &Slot,
        f: impl FnOnce(&mut Session) -> Result<T, ApiError>,
    ) -> Result<T, ApiError> {
        let mut session = match slot.session.try_lock() {
            Ok(guard) => guard,
            Err(TryLockError::WouldBlock) => {
                return Err(ApiError::conflict("another request is modifying this session"))
            }
            Err(TryLockError::Poisoned(_)) => {
                return Err(ApiError::internal("session state is unavailable"))
            }
        };
        let out = f(&mut session)?;
        let json = session.to_json();
        self.persist(&session.session_id, &json)?;
        *slot.snapshot.write().expect("snapshot") = Arc::new(json);
        Ok(out)
    }
}

fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(tmp, path)
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.code.http_status())
            .unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        json_response(status, &self)
    }
}

fn json_response<T: Serialize>(status: StatusCode, body: &T) -> Response {
    let body = serde_json::to_vec(body).expect("response serializes");
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateSessionRequest = parse_body(&body)?;
    if req.query.trim().is_empty() {
        return Err(ApiError::bad_request("query text is empty"));
    }
    let mut config = state.defaults;
    if let Some(k) = req.k {
        config.k = k;
    }
    if let Some(max_rounds) = req.max_rounds {
        config.max_rounds = max_rounds;
    }
    if let Some(alpha) = req.alpha {
        config.params = RefinementParams {
            alpha,
            ..config.params
        };
    }
    let st = state.clone();
    let response = blocking(move || {
        let session = Session::start_with_id(
            new_session_id(),
            &req.query,
            None,
            &st.backend,
            &st.index,
            &config,
        )?;
        let response = CreateSessionResponse {
            session_id: session.session_id.clone(),
            status: session.status,
            k: session.k,
            max_rounds: session.max_rounds,
            round0: candidates(&session.round0, &st.index),
        };
        let slot = Arc::new(Slot::new(session));
        st.persist(&response.session_id, &slot.snapshot.read().expect("snapshot"))?;
        st.sessions
            .write()
            .expect("session map")
            .insert(response.session_id.clone(), slot);
        Ok(response)
    })
    .await?;
    Ok(json_response(StatusCode::CREATED, &response))
}

async fn next_question(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let slot = state.slot(&id)?;
    if !body.is_empty() {
        parse_body::<serde_json::Map<String, serde_json::Value>>(&body)?;
    }
    let st = state.clone();
    let response = blocking(move || {
        st.mutate(&slot, |session| {
            let round = session.rounds.len() + 1;
            let pending = session
                .next_question(&st.backend, &st.index)
                .map_err(|e| ApiError::from(e).with_round(Some(round)))?
                .clone();
            let caption = st
                .index
                .get(&pending.anchor_id)
                .map(|r| r.metadata.caption.clone())
                .unwrap_or_default();
            Ok(QuestionResponse {
                round: pending.round,
                question: pending.question,
                anchor: Anchor {
                    id: pending.anchor_id,
                    caption,
                },
            })
        })
    })
    .await?;
    Ok(json_response(StatusCode::OK, &response))
}

async fn submit_answer(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let slot = state.slot(&id)?;
    let req: AnswerRequest = parse_body(&body)?;
    let st = state.clone();
    let response = blocking(move || {
        st.mutate(&slot, |session| {
            let round = session.rounds.len() + 1;
            let record = session
                .submit_answer(Answer::Text(&req.text), &st.backend, &st.index)
                .map_err(|e| ApiError::from(e).with_round(Some(round)))?;
            let round = RoundView::new(record, &st.index);
            Ok(AnswerResponse {
                status: session.status,
                round,
            })
        })
    })
    .await?;
    Ok(json_response(StatusCode::OK, &response))
}

async fn get_session(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Response, ApiError> {
    let slot = state.slot(&id)?;
    let snapshot = slot.snapshot.read().expect("snapshot").clone();
    Ok((
        StatusCode::OK,
        [(header::CONTENT_TYPE, "application/json")],
        snapshot.as_bytes().to_vec(),
    )
        .into_response())
}

async fn not_found() -> ApiError {
    ApiError::not_found("no such route")
}

async fn method_not_allowed() -> Response {
    let err = ApiError::new(ErrorCode::BadRequest, "method not allowed on this route");
    json_response(StatusCode::METHOD_NOT_ALLOWED, &err)
}

/// Origins allowed to call the service from a browser. Empty means any.
#[derive(Debug, Clone, Default)]
pub struct CorsOrigins(pub Vec<String>);

fn cors_layer(origins: &CorsOrigins) -> Result<CorsLayer, ApiError> {
    let layer = CorsLayer::new()
        .allow_methods(Any)
        .allow_headers([header::CONTENT_TYPE]);
    if origins.0.is_empty() {
        return Ok(layer.allow_origin(Any));
    }
    let values = origins
        .0
        .iter()
        .map(|o| {
            HeaderValue::from_str(o).map_err(|_| ApiError::bad_request(format!("invalid origin {o:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(layer.allow_origin(AllowOrigin::list(values)))
}

pub fn router(state: AppState, origins: &CorsOrigins) -> Result<Router, ApiError> {
    Ok(Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/question", post(next_question))
        .route("/v1/sessions/{id}/answer", post(submit_answer))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .layer(cors_layer(origins)?)
        .with_state(state))
}

pub async fn serve(
    listener: tokio::net::TcpListener,
    router: Router,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router)
        .with_graceful_shutdown(shutdown)
        .await
}

/// A server running on its own runtime thread; stops when dropped.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    pub fn stop(mut self) -> std::io::Result<()> {
        self.shutdown_and_join()
    }

    fn shutdown_and_join(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t
                .join()
                .unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.shutdown_and_join();
    }
}

/// Binds `addr` and serves `router` from a background thread.
pub fn spawn(addr: SocketAddr, router: Router) -> std::io::Result<ServerHandle> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind(addr))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        runtime.block_on(serve(listener, router, async {
            let _ = rx.await;
        }))
    });
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
