//! HTTP session service.
//!
//! ```text
//! POST /sessions                          create; returns {session_id}
//! POST /sessions/{id}/confession          JSON {text} | {audio_b64, text?} | audio/wav body (?transcript=)
//! GET  /sessions/{id}                     status
//! GET  /sessions/{id}/events?since=N      JSON lines, ends after the `complete` phase
//! GET  /sessions/{id}/artifacts/{name}    ch1.wav..ch6.wav, frames.wwf, waveset.json
//! GET  /health
//! ```

use std::collections::HashMap;
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::{Body, Bytes};
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::watch;
use ww_engine::ritual::{Confession, Phase, RitualEvent, RitualSession, SessionEvent, SessionEventKind};

use crate::error::GatewayError;
use crate::runner::{audio_confession, text_confession, ArtifactHost, Services, CHANNEL_FILES, FRAMES_FILE, SEALED_DIR, WAVESET_FILE};

const MAX_BODY_BYTES: usize = 16 << 20;

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    services: Services,
    output_dir: PathBuf,
    sessions: Mutex<HashMap<String, Arc<Slot>>>,
}

impl AppState {
    pub fn new(services: Services, output_dir: impl Into<PathBuf>) -> Self {
        Self { inner: Arc::new(Inner { services, output_dir: output_dir.into(), sessions: Mutex::new(HashMap::new()) }) }
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        self.inner.sessions.lock().unwrap().get(id).cloned().ok_or(ApiError(StatusCode::NOT_FOUND, format!("no session {id}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SlotState {
    AwaitingConfession,
    Running,
    Finished,
}

/// One session's event log. Events are appended under the lock and
/// subscribers are woken through the watch channel.
struct Slot {
    id: String,
    log: Mutex<Log>,
    wake: watch::Sender<usize>,
}

struct Log {
    events: Vec<SessionEvent>,
    state: SlotState,
    /// Present only while waiting for the confession.
    session: Option<RitualSession>,
}

impl Slot {
    fn push(&self, kind: SessionEventKind, payload: Value) {
        let len = {
            let mut log = self.log.lock().unwrap();
            let seq = log.events.len() as u64;
            log.events.push(SessionEvent { kind, session_id: self.id.clone(), seq, payload });
            log.events.len()
        };
        self.wake.send_replace(len);
    }

    fn read_from(&self, since: usize) -> (Vec<SessionEvent>, bool) {
        let log = self.log.lock().unwrap();
        let batch = log.events.get(since..).map(<[_]>::to_vec).unwrap_or_default();
        (batch, log.state == SlotState::Finished)
    }

    /// Marks the session done and strips confession-derived text from the
    /// stored log, so late subscribers see structure but no words.
    fn finish(&self) {
        let len = {
            let mut log = self.log.lock().unwrap();
            log.state = SlotState::Finished;
            for event in &mut log.events {
                redact(event);
            }
            log.events.len()
        };
        self.wake.send_replace(len);
    }
}

fn redact(event: &mut SessionEvent) {
    let keep: &[&str] = match event.kind {
        SessionEventKind::AgentToken | SessionEventKind::Utterance => &["agent_id", "round"],
        SessionEventKind::Emotion => &["band", "freq_hz", "character"],
        _ => return,
    };
    let mut kept = serde_json::Map::new();
    if let Value::Object(map) = &event.payload {
        for key in keep {
            if let Some(v) = map.get(*key) {
                kept.insert((*key).to_string(), v.clone());
            }
        }
    }
    kept.insert("redacted".into(), true.into());
    event.payload = Value::Object(kept);
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({"error": self.1}))).into_response()
    }
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        let status = match &e {
            GatewayError::Input(_) | GatewayError::Core(_) | GatewayError::Json(_) => StatusCode::BAD_REQUEST,
            GatewayError::AsrUnavailable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_status))
        .route("/sessions/{id}/confession", post(submit_confession))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/artifacts/{name}", get(artifact))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn health(State(state): State<AppState>) -> Json<Value> {
    let sessions = state.inner.sessions.lock().unwrap().len();
    Json(json!({"status": "ok", "sessions": sessions}))
}

async fn create_session(State(state): State<AppState>) -> Result<(StatusCode, Json<Value>), ApiError> {
    let mut session = RitualSession::new();
    let phase = session.advance(RitualEvent::Begin).map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let id = session.session_id.clone();
    let (wake, _) = watch::channel(0);
    let slot = Arc::new(Slot {
        id: id.clone(),
        log: Mutex::new(Log { events: Vec::new(), state: SlotState::AwaitingConfession, session: Some(session) }),
        wake,
    });
    slot.push(SessionEventKind::PhaseChanged, serde_json::to_value(phase).expect("serializable"));
    state.inner.sessions.lock().unwrap().insert(id.clone(), slot);
    tracing::info!(session = %id, "session created");
    Ok((StatusCode::CREATED, Json(json!({"session_id": id, "phase": phase}))))
}

async fn session_status(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let slot = state.slot(&id)?;
    let log = slot.log.lock().unwrap();
    let phase = log.events.iter().rev().find(|e| e.kind == SessionEventKind::PhaseChanged).map(|e| e.payload.clone());
    let state = match log.state {
        SlotState::AwaitingConfession => "awaiting_confession",
        SlotState::Running => "running",
        SlotState::Finished => "finished",
    };
    Ok(Json(json!({"session_id": id, "state": state, "phase": phase, "events": log.events.len()})))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfessionBody {
    #[serde(default)]
    text: Option<String>,
    /// Base64 of a WAV file.
    #[serde(default)]
    audio_b64: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
struct ConfessionQuery {
    transcript: Option<String>,
}

async fn submit_confession(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<ConfessionQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let slot = state.slot(&id)?;
    // Claim the session first so a concurrent second submission gets 409.
    let session = {
        let mut log = slot.log.lock().unwrap();
        match log.session.take() {
            Some(s) => s,
            None => return Err(ApiError(StatusCode::CONFLICT, format!("session {id} is not awaiting a confession"))),
        }
    };
    match parse_confession(&state, &headers, query, &body).await {
        Ok(confession) => {
            slot.log.lock().unwrap().state = SlotState::Running;
            tokio::spawn(drive(state.clone(), slot, session, confession));
            Ok((StatusCode::ACCEPTED, Json(json!({"session_id": id, "events": format!("/sessions/{id}/events")}))))
        }
        Err(e) => {
            slot.log.lock().unwrap().session = Some(session);
            Err(e)
        }
    }
}

async fn parse_confession(state: &AppState, headers: &HeaderMap, query: ConfessionQuery, body: &[u8]) -> Result<Confession, ApiError> {
    let asr = state.inner.services.asr.as_ref();
    let content_type = headers.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok()).unwrap_or("");
    let mime = content_type.split(';').next().unwrap_or("").trim().to_ascii_lowercase();
    if matches!(mime.as_str(), "audio/wav" | "audio/x-wav" | "audio/wave" | "audio/vnd.wave") {
        let audio = ww_core::wav::read_wav_bytes(body).map_err(GatewayError::from)?;
        return Ok(audio_confession(audio, query.transcript, asr, None).await?);
    }
    let parsed: ConfessionBody = serde_json::from_slice(body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("invalid confession body: {e}")))?;
    match parsed.audio_b64 {
        Some(b64) => {
            let wav = base64::engine::general_purpose::STANDARD
                .decode(b64.trim())
                .map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("audio_b64: {e}")))?;
            let audio = ww_core::wav::read_wav_bytes(&wav).map_err(GatewayError::from)?;
            Ok(audio_confession(audio, parsed.text.or(query.transcript), asr, None).await?)
        }
        None => Ok(text_confession(parsed.text.as_deref().unwrap_or(""))?),
    }
}

async fn drive(state: AppState, slot: Arc<Slot>, session: RitualSession, confession: Confession) {
    let inner = &state.inner;
    let dir = inner.output_dir.join(&slot.id);
    let sealed_dir = inner.services.config.retain_sealed.then(|| inner.output_dir.join(SEALED_DIR));
    let sink_slot = slot.clone();
    let sink = move |event: SessionEvent| sink_slot.push(event.kind, event.payload);
    let deps = &inner.services.deps;
    let result = async {
        let mut host = ArtifactHost::new(dir, sealed_dir, sink)?;
        if deps.frame_rate > 0 {
            host = host.with_frames(deps.tank.grid_nx, deps.tank.grid_ny, deps.frame_rate)?;
        }
        deps.run(session, confession, &mut host).await.map_err(GatewayError::from)
    }
    .await;
    match result {
        Ok(outcome) => tracing::info!(session = %slot.id, sealed = outcome.session.is_sealed(), "session complete"),
        Err(e) => {
            tracing::error!(session = %slot.id, error = %e, "session failed");
            slot.push(SessionEventKind::Error, json!({"phase": Value::Null, "agent_id": Value::Null, "message": e.to_string(), "fatal": true}));
        }
    }
    slot.finish();
}

#[derive(Debug, Default, Deserialize)]
struct EventsQuery {
    #[serde(default)]
    since: usize,
}

async fn events(State(state): State<AppState>, Path(id): Path<String>, Query(query): Query<EventsQuery>) -> Result<Response, ApiError> {
    let slot = state.slot(&id)?;
    let rx = slot.wake.subscribe();
    let stream = futures::stream::unfold((slot, query.since, rx, false), |(slot, next, mut rx, done)| async move {
        if done {
            return None;
        }
        loop {
            rx.borrow_and_update();
            let (batch, finished) = slot.read_from(next);
            if !batch.is_empty() {
                let mut buf = Vec::new();
                for event in &batch {
                    serde_json::to_writer(&mut buf, event).expect("serializable");
                    buf.push(b'\n');
                }
                let next = next + batch.len();
                return Some((Ok::<_, Infallible>(Bytes::from(buf)), (slot, next, rx, finished)));
            }
            if finished || rx.changed().await.is_err() {
                return None;
            }
        }
    });
    Ok(Response::builder()
        .header(header::CONTENT_TYPE, "application/x-ndjson")
        .header(header::CACHE_CONTROL, "no-cache")
        .body(Body::from_stream(stream))
        .expect("valid response"))
}

async fn artifact(State(state): State<AppState>, Path((id, name)): Path<(String, String)>) -> Result<Response, ApiError> {
    state.slot(&id)?;
    let content_type = if CHANNEL_FILES.contains(&name.as_str()) {
        "audio/wav"
    } else if name == FRAMES_FILE {
        "application/octet-stream"
    } else if name == WAVESET_FILE {
        "application/json"
    } else {
        return Err(ApiError(StatusCode::NOT_FOUND, format!("unknown artifact {name}")));
    };
    let path = state.inner.output_dir.join(&id).join(&name);
    let bytes = tokio::fs::read(&path).await.map_err(|_| ApiError(StatusCode::NOT_FOUND, format!("{name} not written yet")))?;
    Ok(([(header::CONTENT_TYPE, content_type)], bytes).into_response())
}

/// For tests: the phase of the last `phase_changed` in a stream.
pub fn last_phase(events: &[SessionEvent]) -> Option<Phase> {
    events
        .iter()
        .rev()
        .find(|e| e.kind == SessionEventKind::PhaseChanged)
        .and_then(|e| serde_json::from_value(e.payload.clone()).ok())
}
