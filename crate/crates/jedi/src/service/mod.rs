//! HTTP service hosting live teaching sessions.
//!
//! Routes:
//! - `POST /sessions`
//! - `GET /sessions/{id}`
//! - `POST /sessions/{id}/calibration`
//! - `GET /sessions/{id}/next`
//! - `POST /sessions/{id}/label`
//! - `GET|POST /sessions/{id}/evaluation`
//! - `GET /sessions/{id}/report`
//! - `GET /healthz`
//!
//! Every route under `/sessions/{id}` needs the session's bearer token.
//! Mutating requests to a session that is already handling one get `429`.

pub mod registry;
pub mod session;
pub mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use jedi_core::model::{Label, TeachingEvent};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, OwnedMutexGuard};
use tower_http::services::ServeDir;

pub use registry::{DatasetEntry, Registry};
pub use session::{
    CalibrationInput, LogRecord, Memory, Phase, ServiceTeacher, Session, SessionConfig, SessionEvent, TeachingGainReport,
};
use store::SessionLog;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error("missing or invalid bearer token")]
    Unauthorized,
    #[error("no such session")]
    NotFound,
    #[error("{msg}")]
    Conflict { msg: String, phase: Option<Phase> },
    #[error("session is busy with another request; retry")]
    Busy,
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Unauthorized => StatusCode::UNAUTHORIZED,
            ServiceError::NotFound => StatusCode::NOT_FOUND,
            ServiceError::Conflict { .. } => StatusCode::CONFLICT,
            ServiceError::Busy => StatusCode::TOO_MANY_REQUESTS,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<Phase>,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        if let ServiceError::Internal(m) = &self {
            tracing::error!("{m}");
        }
        let phase = match &self {
            ServiceError::Conflict { phase, .. } => *phase,
            _ => None,
        };
        let mut resp = (self.status(), Json(ErrorBody { error: self.to_string(), phase })).into_response();
        if matches!(self, ServiceError::Busy) {
            resp.headers_mut().insert(header::RETRY_AFTER, header::HeaderValue::from_static("1"));
        }
        resp
    }
}

type ApiResult<T> = Result<T, ServiceError>;

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("invalid request body: {e}")))
}

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Directory of per-session logs; sessions are kept in memory only when unset.
    pub log_dir: Option<PathBuf>,
    /// Served at `/` for the browser client.
    pub static_dir: Option<PathBuf>,
    /// Served at `/assets`; relative example payloads resolve against it.
    pub assets_dir: Option<PathBuf>,
}

struct Slot {
    session: Session,
    log: Option<SessionLog>,
}

impl Slot {
    /// Apply `events` in order, persist them, then publish the new state.
    fn commit(&mut self, events: Vec<SessionEvent>, data: &DatasetEntry) -> ApiResult<()> {
        let mut next = self.session.clone();
        let mut records = Vec::with_capacity(events.len());
        for event in events {
            let r = LogRecord {
                seq: next.last_seq + 1,
                at_ms: now_ms(),
                event,
            };
            next.apply(&r, data)?;
            records.push(r);
        }
        if let Some(log) = &mut self.log {
            log.append(&records, &next)
                .map_err(|e| ServiceError::Internal(format!("writing session log: {e}")))?;
        }
        self.session = next;
        Ok(())
    }
}

#[derive(Clone)]
struct Handle {
    token: String,
    slot: Arc<Mutex<Slot>>,
}

pub struct AppState {
    registry: Registry,
    sessions: RwLock<HashMap<String, Handle>>,
    config: ServiceConfig,
}

impl AppState {
    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    /// Current state of a session.
    pub async fn session(&self, id: &str) -> Option<Session> {
        let h = self.sessions.read().ok()?.get(id).cloned()?;
        let slot = h.slot.lock().await;
        Some(slot.session.clone())
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().map_or(0, |m| m.len())
    }

    fn handle(&self, id: &str, headers: &HeaderMap) -> ApiResult<Handle> {
        let h = self
            .sessions
            .read()
            .map_err(|_| ServiceError::Internal("session table poisoned".into()))?
            .get(id)
            .cloned()
            .ok_or(ServiceError::NotFound)?;
        let token = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or(ServiceError::Unauthorized)?;
        if token.trim() != h.token {
            return Err(ServiceError::Unauthorized);
        }
        Ok(h)
    }

    /// Exclusive access for a mutating request, or `Busy`.
    fn exclusive(&self, id: &str, headers: &HeaderMap) -> ApiResult<OwnedMutexGuard<Slot>> {
        self.handle(id, headers)?.slot.try_lock_owned().map_err(|_| ServiceError::Busy)
    }

    async fn shared(&self, id: &str, headers: &HeaderMap) -> ApiResult<OwnedMutexGuard<Slot>> {
        Ok(self.handle(id, headers)?.slot.lock_owned().await)
    }

    fn data(&self, s: &Session) -> ApiResult<Arc<DatasetEntry>> {
        self.registry
            .get(&s.config.dataset)
            .ok_or_else(|| ServiceError::Internal(format!("dataset `{}` vanished", s.config.dataset)))
    }

    fn payload_url(&self, payload: Option<&String>) -> Option<String> {
        let p = payload?;
        if p.starts_with('/') || p.contains("://") {
            return Some(p.clone());
        }
        self.config.assets_dir.as_ref().map(|_| format!("/assets/{p}"))
    }
}

/// Build the router, rebuilding any sessions found in the log directory.
pub fn app(registry: Registry, config: ServiceConfig) -> std::io::Result<(Router, Arc<AppState>)> {
    let mut sessions = HashMap::new();
    if let Some(root) = &config.log_dir {
        for (session, log) in store::recover_all(root, &registry)? {
            let handle = Handle {
                token: session.token.clone(),
                slot: Arc::new(Mutex::new(Slot { session, log: Some(log) })),
            };
            let id = handle.slot.try_lock().map(|s| s.session.id.clone()).unwrap_or_default();
            sessions.insert(id, handle);
        }
    }
    let state = Arc::new(AppState {
        registry,
        sessions: RwLock::new(sessions),
        config: config.clone(),
    });
    let mut router = Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(status))
        .route("/sessions/{id}/calibration", post(calibrate))
        .route("/sessions/{id}/next", get(next_example))
        .route("/sessions/{id}/label", post(submit_label))
        .route("/sessions/{id}/evaluation", get(evaluation_batch).post(submit_evaluation))
        .route("/sessions/{id}/report", get(report))
        .with_state(state.clone());
    if let Some(dir) = &config.assets_dir {
        router = router.nest_service("/assets", ServeDir::new(dir));
    }
    if let Some(dir) = &config.static_dir {
        router = router.fallback_service(ServeDir::new(dir));
    }
    Ok((router, state))
}

/// Serve until interrupted.
pub async fn serve(addr: SocketAddr, registry: Registry, config: ServiceConfig) -> std::io::Result<()> {
    let (router, state) = app(registry, config)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(
        "listening on {}, {} datasets, {} sessions restored",
        listener.local_addr()?,
        state.registry.names().count(),
        state.session_count()
    );
    axum::serve(listener, router)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub sessions: usize,
    pub datasets: Vec<String>,
}

async fn healthz(State(st): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        sessions: st.session_count(),
        datasets: st.registry.names().map(str::to_string).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub id: String,
    pub dataset: String,
    pub teacher: ServiceTeacher,
    pub phase: Phase,
    pub memory: Option<Memory>,
    pub budget: Option<usize>,
    pub taught: usize,
    pub remaining: usize,
    pub recommendations_computed: usize,
    pub created_at_ms: u64,
    pub updated_at_ms: u64,
}

impl SessionStatus {
    fn of(s: &Session) -> Self {
        SessionStatus {
            id: s.id.clone(),
            dataset: s.config.dataset.clone(),
            teacher: s.config.teacher,
            phase: s.phase,
            memory: s.memory.clone(),
            budget: s.budget,
            taught: s.events.len(),
            remaining: s.remaining(),
            recommendations_computed: s.recommendations_computed,
            created_at_ms: s.created_at_ms,
            updated_at_ms: s.updated_at_ms,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
    pub token: String,
    #[serde(flatten)]
    pub status: SessionStatus,
}

async fn create_session(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<Created>)> {
    let config: SessionConfig = parse_body(&body)?;
    config.validate()?;
    let data = st
        .registry
        .get(&config.dataset)
        .ok_or_else(|| ServiceError::BadRequest(format!("unknown dataset `{}`", config.dataset)))?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let token = format!("{}{}", uuid::Uuid::new_v4().simple(), uuid::Uuid::new_v4().simple());
    let record = LogRecord {
        seq: 1,
        at_ms: now_ms(),
        event: SessionEvent::Created {
            id: id.clone(),
            token: token.clone(),
            seed: config.seed.unwrap_or_else(rand::random),
            config,
        },
    };
    let session = Session::create(&record, &data)?;
    let log = match &st.config.log_dir {
        Some(root) => {
            let mut log = SessionLog::create(root, &id).map_err(|e| ServiceError::Internal(format!("creating session log: {e}")))?;
            log.append(std::slice::from_ref(&record), &session)
                .map_err(|e| ServiceError::Internal(format!("writing session log: {e}")))?;
            Some(log)
        }
        None => None,
    };
    let status = SessionStatus::of(&session);
    let handle = Handle {
        token: token.clone(),
        slot: Arc::new(Mutex::new(Slot { session, log })),
    };
    st.sessions
        .write()
        .map_err(|_| ServiceError::Internal("session table poisoned".into()))?
        .insert(id.clone(), handle);
    Ok((StatusCode::CREATED, Json(Created { id, token, status })))
}

async fn status(State(st): State<Arc<AppState>>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Json<SessionStatus>> {
    let slot = st.shared(&id, &headers).await?;
    Ok(Json(SessionStatus::of(&slot.session)))
}

async fn calibrate(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<SessionStatus>> {
    let mut slot = st.exclusive(&id, &headers)?;
    if slot.session.phase != Phase::Calibration {
        return Err(ServiceError::Conflict {
            msg: "calibration is closed for this session".into(),
            phase: Some(slot.session.phase),
        });
    }
    let input: CalibrationInput = parse_body(&body)?;
    let scores = input.scores()?;
    let data = st.data(&slot.session)?;
    slot.commit(
        vec![SessionEvent::Calibrated {
            scores,
            trials: input.trials,
        }],
        &data,
    )?;
    Ok(Json(SessionStatus::of(&slot.session)))
}

/// An example as shown to the learner. Carries no label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Presentation {
    pub step: usize,
    pub budget: usize,
    pub example_id: String,
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_url: Option<String>,
}

fn phase_conflict(s: &Session, want: &str) -> ServiceError {
    let msg = match s.phase {
        Phase::Calibration => "calibration has not been submitted".to_string(),
        Phase::Evaluation => format!("teaching budget exhausted; continue at /sessions/{}/evaluation", s.id),
        Phase::Done => format!("session is finished; see /sessions/{}/report", s.id),
        Phase::Teaching => format!("session is teaching, not {want}"),
    };
    ServiceError::Conflict {
        msg,
        phase: Some(s.phase),
    }
}

async fn next_example(State(st): State<Arc<AppState>>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Json<Presentation>> {
    let mut slot = st.exclusive(&id, &headers)?;
    if slot.session.phase != Phase::Teaching {
        return Err(phase_conflict(&slot.session, "teaching"));
    }
    let data = st.data(&slot.session)?;
    if slot.session.pending.is_none() {
        let teacher = slot.session.teacher.clone().ok_or_else(|| ServiceError::Internal("teacher missing".into()))?;
        let (step, seed) = (slot.session.step(), slot.session.seed);
        let d = data.clone();
        let rec = tokio::task::spawn_blocking(move || teacher.recommend(&d.env(), None, step, seed))
            .await
            .map_err(|e| ServiceError::Internal(e.to_string()))?
            .map_err(|e| ServiceError::Internal(format!("recommendation failed: {e}")))?;
        slot.commit(vec![SessionEvent::Recommended { rec }], &data)?;
    }
    let s = &slot.session;
    let rec = &s.pending.as_ref().expect("pending after recommendation").rec;
    let e = &data.teach.examples()[rec.index];
    Ok(Json(Presentation {
        step: rec.step,
        budget: s.budget.unwrap_or(0),
        example_id: e.id.clone(),
        x: e.x.clone(),
        payload: e.payload.clone(),
        payload_url: st.payload_url(e.payload.as_ref()),
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelInput {
    pub example_id: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reveal {
    pub step: usize,
    pub example_id: String,
    pub learner_label: Label,
    pub true_label: Label,
    pub correct: bool,
    pub phase: Phase,
    pub remaining: usize,
}

async fn submit_label(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<Reveal>> {
    let mut slot = st.exclusive(&id, &headers)?;
    if slot.session.phase != Phase::Teaching {
        return Err(phase_conflict(&slot.session, "teaching"));
    }
    let input: LabelInput = parse_body(&body)?;
    let data = st.data(&slot.session)?;
    let rec = match &slot.session.pending {
        Some(p) => p.rec.clone(),
        None => {
            return Err(ServiceError::Conflict {
                msg: "no example is pending; fetch one from /next".into(),
                phase: Some(Phase::Teaching),
            })
        }
    };
    let true_label = data.teach.examples()[rec.index].y;
    slot.commit(
        vec![
            SessionEvent::Answered {
                step: rec.step,
                example_id: input.example_id.clone(),
                label: input.label,
            },
            SessionEvent::Revealed {
                step: rec.step,
                true_label,
            },
        ],
        &data,
    )?;
    Ok(Json(Reveal {
        step: rec.step,
        example_id: input.example_id,
        learner_label: input.label,
        true_label,
        correct: input.label == true_label,
        phase: slot.session.phase,
        remaining: slot.session.remaining(),
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub example_id: String,
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalBatch {
    pub items: Vec<EvalItem>,
    pub submitted: bool,
}

async fn evaluation_batch(State(st): State<Arc<AppState>>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Json<EvalBatch>> {
    let slot = st.shared(&id, &headers).await?;
    let s = &slot.session;
    if !matches!(s.phase, Phase::Evaluation | Phase::Done) {
        return Err(phase_conflict(s, "evaluating"));
    }
    let data = st.data(s)?;
    let items = s
        .eval_batch
        .iter()
        .map(|&i| {
            let e = &data.eval[i];
            EvalItem {
                example_id: e.id.clone(),
                x: e.x.clone(),
                payload: e.payload.clone(),
                payload_url: st.payload_url(e.payload.as_ref()),
            }
        })
        .collect();
    Ok(Json(EvalBatch {
        items,
        submitted: s.phase == Phase::Done,
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationInput {
    pub answers: Vec<LabelInput>,
}

async fn submit_evaluation(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<TeachingGainReport>> {
    let mut slot = st.exclusive(&id, &headers)?;
    if slot.session.phase != Phase::Evaluation {
        return Err(phase_conflict(&slot.session, "evaluating"));
    }
    let input: EvaluationInput = parse_body(&body)?;
    let data = st.data(&slot.session)?;
    let mut given: HashMap<&str, Label> = HashMap::new();
    for a in &input.answers {
        if given.insert(a.example_id.as_str(), a.label).is_some() {
            return Err(ServiceError::BadRequest(format!("`{}` answered twice", a.example_id)));
        }
    }
    let mut answers = Vec::with_capacity(slot.session.eval_batch.len());
    for &i in &slot.session.eval_batch {
        let id = data.eval[i].id.as_str();
        answers.push(*given.get(id).ok_or_else(|| ServiceError::BadRequest(format!("missing answer for `{id}`")))?);
    }
    if given.len() != answers.len() {
        return Err(ServiceError::BadRequest("answers include examples outside the evaluation batch".into()));
    }
    slot.commit(vec![SessionEvent::EvaluationSubmitted { answers }], &data)?;
    let report = slot.session.report.clone().ok_or_else(|| ServiceError::Internal("report missing".into()))?;
    Ok(Json(report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub status: SessionStatus,
    pub report: TeachingGainReport,
    pub events: Vec<TeachingEvent>,
}

async fn report(State(st): State<Arc<AppState>>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Json<SessionReport>> {
    let slot = st.shared(&id, &headers).await?;
    let s = &slot.session;
    let report = s.report.clone().ok_or_else(|| phase_conflict(s, "finished"))?;
    Ok(Json(SessionReport {
        status: SessionStatus::of(s),
        report,
        events: s.events.clone(),
    }))
}
