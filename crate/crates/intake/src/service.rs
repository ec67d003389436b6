//! JSON HTTP API over the screener: sessions, program listing and rules
//! management.
//!
//! Sessions are kept in memory. Each session holds a snapshot of its
//! program, so a rules update only affects sessions started afterwards.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};
use std::thread;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::json;

use intake_core::domain::validate_rules_text;
use intake_core::rules::RouteError;
use intake_core::screener::{
    finalize, Action, DecodeParams, InstructionSet, ScreeningContext, SessionError, SessionId, SessionState,
};
use intake_core::{
    check_formal_eligibility, normalize_location, route_program, ApplicantProfile, Determination, FormalConfig,
    FormalResult, Program, ProgramId, Provider, RoutingTable, Timestamp, Turn,
};

use crate::config::ServiceConfig;

pub const ABOUT_AI_PATH: &str = "/api/about-ai";

const ABOUT_AI_TEXT: &str = "After the location and income screens, your description of the problem \
is sent to a large language model together with the legal aid program's own written intake rules. \
The model compares the two. It may ask follow-up questions, and then it suggests whether the program \
would probably take your case. It never makes the final decision: program staff review every application, \
and if the model cannot give a clear answer you are referred to a person. The model can make mistakes. \
Please do not include names, addresses or other identifying details in your description.";

struct SessionEntry {
    state: SessionState,
    program: Arc<Program>,
    // Stands in for the session id in the transcript log.
    log_ref: String,
}

/// Shared state behind the router.
pub struct AppState {
    programs: RwLock<BTreeMap<ProgramId, Arc<Program>>>,
    routing: RoutingTable,
    formal: FormalConfig,
    instructions: InstructionSet,
    params: DecodeParams,
    provider: Arc<dyn Provider>,
    admin_token: Option<String>,
    statewide_referral: String,
    sessions: Mutex<HashMap<String, Arc<tokio::sync::Mutex<SessionEntry>>>>,
    log: Option<Mutex<File>>,
}

impl AppState {
    /// `admin_token` of `None` disables rules updates.
    pub fn new(cfg: &ServiceConfig, provider: Arc<dyn Provider>, admin_token: Option<String>) -> io::Result<Self> {
        let log = match &cfg.transcript_log {
            Some(p) => Some(Mutex::new(open_log(p)?)),
            None => None,
        };
        Ok(AppState {
            programs: RwLock::new(cfg.programs.iter().map(|(k, v)| (k.clone(), Arc::new(v.clone()))).collect()),
            routing: cfg.routing.clone(),
            formal: cfg.formal.clone(),
            instructions: cfg.instructions.clone(),
            params: cfg.params,
            provider,
            admin_token: admin_token.filter(|t| !t.is_empty()),
            statewide_referral: cfg.statewide_referral.clone(),
            sessions: Mutex::new(HashMap::new()),
            log,
        })
    }

    fn program(&self, id: &ProgramId) -> Option<Arc<Program>> {
        self.programs.read().expect("program registry").get(id).cloned()
    }

    fn log_event(&self, event: &serde_json::Value) {
        let Some(log) = &self.log else { return };
        let mut line = event.to_string();
        line.push('\n');
        let mut f = log.lock().expect("transcript log");
        if let Err(e) = f.write_all(line.as_bytes()).and_then(|_| f.flush()) {
            tracing::error!(error = %e, "transcript log write failed");
        }
    }
}

fn open_log(path: &Path) -> io::Result<File> {
    OpenOptions::new().create(true).append(true).open(path)
}

fn new_id() -> String {
    let mut bytes = [0u8; 16];
    rand::rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}

fn error(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    (status, Json(json!({"error": code, "message": message.into()}))).into_response()
}

fn unprocessable(message: impl Into<String>) -> Response {
    error(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", message)
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, String> {
    serde_json::from_slice(body).map_err(|e| e.to_string())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route(ABOUT_AI_PATH, get(about_ai))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}/messages", post(post_message))
        .route("/api/programs", get(list_programs))
        .route("/api/programs/{id}/rules", put(update_rules))
        .with_state(state)
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

async fn about_ai() -> Json<serde_json::Value> {
    Json(json!({"title": "How AI is used", "text": ABOUT_AI_TEXT}))
}

#[derive(Serialize)]
struct ProgramRef {
    id: ProgramId,
    name: String,
    website: String,
    phone: String,
}

impl ProgramRef {
    fn of(p: &Program) -> Self {
        ProgramRef { id: p.id.clone(), name: p.name.clone(), website: p.website.clone(), phone: p.phone.clone() }
    }
}

#[derive(Serialize)]
struct CreateSessionResponse {
    session_id: Option<String>,
    program: Option<ProgramRef>,
    formal: Option<FormalResult>,
    next: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    referral: Option<String>,
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> Response {
    let mut profile: ApplicantProfile = match parse_body(&body) {
        Ok(p) => p,
        Err(e) => return unprocessable(e),
    };
    if profile.household_size == 0 {
        return unprocessable("household_size must be at least 1");
    }
    profile.location = match normalize_location(&profile.location) {
        Ok(l) => l,
        Err(e) => return unprocessable(e.to_string()),
    };

    let program_id = match route_program(&profile.location, &app.routing) {
        Ok(id) => id.clone(),
        Err(RouteError::NotServed) => {
            return Json(CreateSessionResponse {
                session_id: None,
                program: None,
                formal: None,
                next: "ineligible".into(),
                reason: Some("NotServed"),
                referral: Some(app.statewide_referral.clone()),
            })
            .into_response()
        }
        Err(e @ RouteError::NotNormalized(_)) => return unprocessable(e.to_string()),
    };
    let Some(program) = app.program(&program_id) else {
        return error(StatusCode::INTERNAL_SERVER_ERROR, "internal", "routing points at a missing program");
    };

    let formal = check_formal_eligibility(&profile, &app.formal);
    let mut resp = CreateSessionResponse {
        session_id: None,
        program: Some(ProgramRef::of(&program)),
        formal: Some(formal.clone()),
        next: String::new(),
        reason: None,
        referral: None,
    };
    match &formal {
        FormalResult::Eligible => {
            let id = new_id();
            let entry = SessionEntry {
                state: SessionState::new(SessionId(id.clone()), program_id),
                program,
                log_ref: new_id(),
            };
            app.sessions.lock().expect("session map").insert(id.clone(), Arc::new(tokio::sync::Mutex::new(entry)));
            tracing::info!(session = %id, "session created");
            resp.session_id = Some(id);
            resp.next = "describe_problem".into();
        }
        FormalResult::Ineligible { reason } => {
            resp.next = "ineligible".into();
            resp.reason = Some(match reason {
                intake_core::rules::IneligibleReason::IncomeExceedsCeiling => "IncomeExceedsCeiling",
                intake_core::rules::IneligibleReason::StatusNotAllowed => "StatusNotAllowed",
            });
            resp.referral = Some(format!(
                "Based on what you entered, your household is outside the eligibility guidelines for {}. \
                 If you think this is a mistake, call {} or visit {}.",
                program.name, program.phone, program.website
            ));
        }
        FormalResult::Unknown { missing_fields } => {
            let field = missing_fields.first().map(String::as_str).unwrap_or("profile");
            resp.next = format!("collect:{field}");
        }
    }
    Json(resp).into_response()
}

#[derive(Deserialize)]
struct MessageBody {
    text: String,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum MessageResponse {
    Question { question: String, questions_asked: u8 },
    Determination { determination: Determination, about_ai: &'static str },
}

fn turn_event(log_ref: &str, program: &ProgramId, turn: &Turn) -> serde_json::Value {
    json!({"event": "turn", "log_ref": log_ref, "program": program, "turn": turn})
}

async fn post_message(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Response {
    let Some(slot) = app.sessions.lock().expect("session map").get(&id).cloned() else {
        return error(StatusCode::NOT_FOUND, "unknown_session", "no such session");
    };
    let msg: MessageBody = match parse_body(&body) {
        Ok(m) => m,
        Err(e) => return unprocessable(e),
    };
    if msg.text.trim().is_empty() {
        return unprocessable("text is empty");
    }
    let Ok(mut entry) = slot.try_lock_owned() else {
        return error(StatusCode::CONFLICT, "session_busy", "another message for this session is in progress");
    };
    if entry.state.is_closed() {
        return error(StatusCode::CONFLICT, "session_closed", "this session has already ended");
    }

    let worker = Arc::clone(&app);
    let joined = tokio::task::spawn_blocking(move || {
        let e = &mut *entry;
        let before = e.state.transcript().len();
        let ctx = ScreeningContext { instructions: &worker.instructions, program: &e.program, params: worker.params };
        let action = e.state.advance(ctx, &msg.text, worker.provider.as_ref(), crate::now());
        if let Ok(Action::AskUser(_) | Action::Close(_)) = &action {
            for turn in &e.state.transcript().turns()[before..] {
                worker.log_event(&turn_event(&e.log_ref, &e.program.id, turn));
            }
        }
        let determination = match &action {
            Ok(Action::Close(_)) => {
                let d = finalize(&e.state, &e.program).expect("closed session finalizes");
                worker.log_event(&json!({
                    "event": "determination",
                    "log_ref": e.log_ref,
                    "program": e.program.id,
                    "timestamp": crate::now(),
                    "determination": d,
                }));
                Some(d)
            }
            _ => None,
        };
        (action, determination, e.state.questions_asked())
    })
    .await;

    let (action, determination, asked) = match joined {
        Ok(v) => v,
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
    };
    match action {
        Ok(Action::AskUser(question)) => {
            Json(MessageResponse::Question { question, questions_asked: asked }).into_response()
        }
        Ok(Action::Close(_)) => {
            tracing::info!(session = %id, "session closed");
            Json(MessageResponse::Determination {
                determination: determination.expect("determination for closed session"),
                about_ai: ABOUT_AI_PATH,
            })
            .into_response()
        }
        Ok(Action::RetryLater(e)) => {
            tracing::warn!(session = %id, error = %e, "screening provider unavailable");
            error(StatusCode::SERVICE_UNAVAILABLE, "retry_later", "the screening service is temporarily unavailable")
        }
        Err(SessionError::Closed) => error(StatusCode::CONFLICT, "session_closed", "this session has already ended"),
        Err(SessionError::EmptyText) => unprocessable("text is empty"),
        Err(e @ SessionError::ProgramMismatch { .. }) => {
            error(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
        }
    }
}

#[derive(Serialize)]
struct ProgramListing {
    id: ProgramId,
    name: String,
    service_area_size: usize,
    rules_updated_at: Timestamp,
}

async fn list_programs(State(app): State<Arc<AppState>>) -> Json<Vec<ProgramListing>> {
    let programs = app.programs.read().expect("program registry");
    Json(
        programs
            .values()
            .map(|p| ProgramListing {
                id: p.id.clone(),
                name: p.name.clone(),
                service_area_size: p.service_area.len(),
                rules_updated_at: p.rules_updated_at,
            })
            .collect(),
    )
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

fn authorized(app: &AppState, headers: &HeaderMap) -> bool {
    let Some(expected) = &app.admin_token else { return false };
    let Some(given) = headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok()) else { return false };
    let Some(token) = given.strip_prefix("Bearer ") else { return false };
    constant_time_eq(token.trim().as_bytes(), expected.as_bytes())
}

#[derive(Deserialize)]
struct RulesBody {
    rules_text: String,
}

async fn update_rules(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    if !authorized(&app, &headers) {
        return error(StatusCode::UNAUTHORIZED, "unauthorized", "a valid admin token is required");
    }
    let id = ProgramId::new(id);
    if app.program(&id).is_none() {
        return error(StatusCode::NOT_FOUND, "unknown_program", format!("no program `{id}`"));
    }
    let req: RulesBody = match parse_body(&body) {
        Ok(r) => r,
        Err(e) => return unprocessable(e),
    };
    if let Err(e) = validate_rules_text(&req.rules_text) {
        return unprocessable(e.to_string());
    }
    let mut programs = app.programs.write().expect("program registry");
    let Some(current) = programs.get(&id) else {
        return error(StatusCode::NOT_FOUND, "unknown_program", format!("no program `{id}`"));
    };
    let updated_at = Timestamp(crate::now().0.max(current.rules_updated_at.0 + 1));
    let next = Program { rules_text: req.rules_text, rules_updated_at: updated_at, ..(**current).clone() };
    programs.insert(id.clone(), Arc::new(next));
    drop(programs);
    tracing::info!(program = %id, "rules updated");
    Json(json!({"rules_updated_at": updated_at})).into_response()
}

/// Serves until the listener fails or ctrl-c is received.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// A server running on its own runtime thread, stopped on drop.
pub struct BackgroundServer {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<()>>,
}

impl BackgroundServer {
    /// Binds an ephemeral port on 127.0.0.1.
    pub fn start(state: Arc<AppState>) -> io::Result<Self> {
        Self::start_router(router(state))
    }

    pub fn start_router(app: Router) -> io::Result<Self> {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
        let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
        let addr = listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let thread = thread::spawn(move || {
            rt.block_on(async move {
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(BackgroundServer { addr, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
