//! HTTP/JSON session service around the suggestion loop.
//!
//! Each session keeps the GUI it was created with and an append-only event
//! log; the current GUI is always `replay(initial, history)`. Mutations carry
//! an optional `expected_version` (the history length the client last saw)
//! and are rejected with 409 when it is stale.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

use crate::autocomplete::{accept, RefineConfig, Suggester, Suggestion};
use crate::error::LayoutError;
use crate::extract::ExtractionConfig;
use crate::model::{gui_from_json_with, to_canonical_json, BBox, Element, Gui};
use crate::network::Network;

pub const DEFAULT_PORT: u16 = 8787;

/// One entry of a session's history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    AddElement { element: Element },
    Place { element_id: String, bbox: BBox },
    Undo,
}

/// Applies one event; `placed` is the stack of elements as they were
/// before each still-active placement.
fn apply(gui: &mut Gui, placed: &mut Vec<Element>, event: &Event) -> Result<(), LayoutError> {
    match event {
        Event::AddElement { element } => {
            if element.is_placed() {
                return Err(LayoutError::Validation(format!(
                    "element `{}` must be added unplaced",
                    element.id
                )));
            }
            if gui.element(&element.id).is_some() {
                return Err(LayoutError::Validation(format!("duplicate element id `{}`", element.id)));
            }
            gui.elements.push(element.clone());
        }
        Event::Place { element_id, bbox } => {
            let before = gui
                .element(element_id)
                .cloned()
                .ok_or_else(|| LayoutError::UnknownElement(element_id.clone()))?;
            *gui = accept(gui, element_id, *bbox)?;
            placed.push(before);
        }
        Event::Undo => {
            let before = placed
                .pop()
                .ok_or_else(|| LayoutError::Validation("nothing to undo".into()))?;
            let e = gui
                .element_mut(&before.id)
                .ok_or_else(|| LayoutError::UnknownElement(before.id.clone()))?;
            *e = before;
        }
    }
    Ok(())
}

/// Reconstructs a session's GUI from its initial state and history.
pub fn replay(initial: &Gui, history: &[Event]) -> Result<Gui, LayoutError> {
    let mut gui = initial.clone();
    let mut placed = Vec::new();
    for e in history {
        apply(&mut gui, &mut placed, e)?;
    }
    Ok(gui)
}

#[derive(Debug, Clone)]
struct Session {
    initial: Gui,
    gui: Gui,
    history: Vec<Event>,
    placed: Vec<Element>,
}

impl Session {
    fn view(&self, id: &str) -> Value {
        json!({
            "session_id": id,
            "version": self.history.len(),
            "gui": self.gui,
            "pool": self.gui.unplaced().collect::<Vec<_>>(),
            "history": self.history,
        })
    }
}

/// Shared service state: one model, many sessions.
pub struct AppState {
    model: Arc<Network>,
    refine: RefineConfig,
    extraction: ExtractionConfig,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    snapshot_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(model: Network, refine: RefineConfig, extraction: ExtractionConfig) -> Self {
        AppState {
            model: Arc::new(model),
            refine,
            extraction,
            sessions: RwLock::new(HashMap::new()),
            snapshot_dir: None,
        }
    }

    /// Writes `<dir>/<session>.json` after every event.
    pub fn with_snapshots(mut self, dir: PathBuf) -> Self {
        self.snapshot_dir = Some(dir);
        self
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("unknown session `{id}`")))
    }

    /// Hash of every session's full state (GUI, history, undo stack), in
    /// session-id order. Equal digests mean nothing was mutated.
    pub fn state_digest(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let sessions = self.sessions.read().expect("session table poisoned");
        let mut ids: Vec<&String> = sessions.keys().collect();
        ids.sort();
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for id in ids {
            let s = sessions[id].lock().expect("session poisoned");
            let full = json!({ "view": s.view(id), "initial": s.initial, "placed": s.placed });
            to_canonical_json(&full).hash(&mut h);
        }
        h.finish()
    }

    fn snapshot(&self, id: &str, s: &Session) -> Result<(), ApiError> {
        if let Some(dir) = &self.snapshot_dir {
            let body = json!({ "initial": s.initial, "history": s.history });
            std::fs::write(dir.join(format!("{id}.json")), to_canonical_json(&body))
                .map_err(|e| ApiError::from(LayoutError::Io(e)))?;
        }
        Ok(())
    }
}

/// Error response: `{"error": code, "message": text}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }
}

impl From<LayoutError> for ApiError {
    fn from(e: LayoutError) -> Self {
        let status = match &e {
            LayoutError::UnknownElement(_) => StatusCode::NOT_FOUND,
            LayoutError::Parse(_)
            | LayoutError::Validation(_)
            | LayoutError::OutOfRange(_)
            | LayoutError::Unplaced(_)
            | LayoutError::Empty(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

fn parse<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::from(LayoutError::Parse(e.to_string())))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn create_session(State(st): State<Arc<AppState>>, body: Bytes) -> Result<(StatusCode, Json<Value>), ApiError> {
    let gui = gui_from_json_with(&body, st.model.vocab())?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let s = Session {
        initial: gui.clone(),
        gui,
        history: Vec::new(),
        placed: Vec::new(),
    };
    st.snapshot(&id, &s)?;
    let view = s.view(&id);
    st.sessions
        .write()
        .expect("session table poisoned")
        .insert(id, Arc::new(Mutex::new(s)));
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    let s = st.session(&id)?;
    let s = s.lock().expect("session poisoned");
    Ok(Json(s.view(&id)))
}

#[derive(Deserialize)]
struct Versioned<T> {
    #[serde(flatten)]
    body: T,
    #[serde(default)]
    expected_version: Option<usize>,
}

#[derive(Deserialize)]
struct AddBody {
    element: Element,
}

#[derive(Deserialize)]
struct PlaceBody {
    element_id: String,
    bbox: BBox,
}

#[derive(Deserialize, Default)]
struct Empty {}

/// Appends `event` if it applies cleanly and the version matches.
fn mutate(st: &AppState, id: &str, expected: Option<usize>, event: Event) -> ApiResult {
    let s = st.session(id)?;
    let mut s = s.lock().expect("session poisoned");
    if let Some(v) = expected {
        if v != s.history.len() {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "conflict",
                format!("expected version {v}, session is at {}", s.history.len()),
            ));
        }
    }
    let mut gui = s.gui.clone();
    let mut placed = s.placed.clone();
    apply(&mut gui, &mut placed, &event)?;
    s.gui = gui;
    s.placed = placed;
    s.history.push(event);
    st.snapshot(id, &s)?;
    Ok(Json(s.view(id)))
}

async fn add_element(State(st): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: Versioned<AddBody> = parse(&body)?;
    let mut probe = Gui::new(1, 1);
    probe.elements.push(req.body.element.clone());
    probe.validate(st.model.vocab())?;
    mutate(&st, &id, req.expected_version, Event::AddElement { element: req.body.element })
}

async fn place(State(st): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: Versioned<PlaceBody> = parse(&body)?;
    let PlaceBody { element_id, bbox } = req.body;
    mutate(&st, &id, req.expected_version, Event::Place { element_id, bbox })
}

async fn undo(State(st): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let expected = if body.iter().all(u8::is_ascii_whitespace) {
        None
    } else {
        parse::<Versioned<Empty>>(&body)?.expected_version
    };
    mutate(&st, &id, expected, Event::Undo)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Single,
    Group,
    All,
}

#[derive(Deserialize)]
struct SuggestQuery {
    #[serde(default)]
    mode: Mode,
    target: Option<String>,
}

fn snapshot_gui(st: &AppState, id: &str) -> Result<(Gui, usize), ApiError> {
    let s = st.session(id)?;
    let s = s.lock().expect("session poisoned");
    Ok((s.gui.clone(), s.history.len()))
}

fn run_suggest(st: &AppState, gui: &Gui, mode: Mode, target: Option<&str>) -> Result<Vec<Suggestion>, ApiError> {
    let sg = Suggester {
        predictor: st.model.as_ref(),
        refine: st.refine,
        extraction: st.extraction,
    };
    Ok(match (mode, target) {
        (Mode::Single, Some(t)) => vec![sg.suggest_for(gui, t)?],
        (_, Some(_)) => {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "validation",
                "`target` only applies to mode=single",
            ))
        }
        (Mode::Single, None) => vec![sg.suggest_one(gui)?],
        (Mode::Group, None) => sg.suggest_group(gui)?,
        (Mode::All, None) => sg.suggest_all(gui)?,
    })
}

async fn suggest(State(st): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Query<SuggestQuery>) -> ApiResult {
    let (gui, version) = snapshot_gui(&st, &id)?;
    let st2 = st.clone();
    let out = blocking(move || run_suggest(&st2, &gui, q.mode, q.target.as_deref())).await?;
    Ok(Json(json!({ "version": version, "mode": q.mode, "suggestions": out })))
}

#[derive(Deserialize)]
struct PreviewQuery {
    target: String,
}

async fn preview(State(st): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Query<PreviewQuery>) -> ApiResult {
    let (gui, _) = snapshot_gui(&st, &id)?;
    let st2 = st.clone();
    let s = blocking(move || run_suggest(&st2, &gui, Mode::Single, Some(&q.target))).await?;
    Ok(Json(serde_json::to_value(&s[0]).map_err(LayoutError::from)?))
}

async fn model_info(State(st): State<Arc<AppState>>) -> Json<Value> {
    Json(st.model.info())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/elements", post(add_element))
        .route("/sessions/{id}/suggest", get(suggest))
        .route("/sessions/{id}/preview", get(preview))
        .route("/sessions/{id}/place", post(place))
        .route("/sessions/{id}/undo", post(undo))
        .route("/model/info", get(model_info))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(state: Arc<AppState>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
