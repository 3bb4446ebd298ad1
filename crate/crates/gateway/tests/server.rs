use std::path::{Path, PathBuf};

use axum::routing::post;
use axum::{Json, Router};
use base64::Engine as _;
use serde_json::{json, Value};
use ww_core::watersim::TankConfig;
use ww_core::wav::{read_wav_bytes, wav_bytes, WavEncoding};
use ww_core::AudioBuffer;
use ww_gateway::asr::{AsrProvider, AsrRequest, HttpAsr, SidecarAsr};
use ww_gateway::runner::Services;
use ww_gateway::server::{router, AppState};
use ww_gateway::{EngineConfig, GatewayError};

struct Server {
    base: String,
    out: tempfile::TempDir,
    client: reqwest::Client,
}

async fn start(seed: u64) -> Server {
    let out = tempfile::tempdir().unwrap();
    let config = EngineConfig { tank: TankConfig::scaled(128, 22), ..Default::default() };
    let services = Services::build(config, Some(seed)).unwrap();
    let state = AppState::new(services, out.path());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(state)).await.unwrap() });
    Server { base: format!("http://{addr}"), out, client: reqwest::Client::new() }
}

impl Server {
    async fn create(&self) -> String {
        let r = self.client.post(format!("{}/sessions", self.base)).send().await.unwrap();
        assert_eq!(r.status(), 201);
        let body: Value = r.json().await.unwrap();
        body["session_id"].as_str().unwrap().to_string()
    }

    async fn confess(&self, id: &str, body: Value) -> reqwest::Response {
        self.client.post(format!("{}/sessions/{id}/confession", self.base)).json(&body).send().await.unwrap()
    }

    /// Reads the event stream to its end, calling `check` on each event as
    /// soon as its line arrives.
    async fn follow(&self, id: &str, since: usize, mut check: impl FnMut(&Value)) -> Vec<Value> {
        let mut r = self.client.get(format!("{}/sessions/{id}/events?since={since}", self.base)).send().await.unwrap();
        assert_eq!(r.status(), 200);
        assert_eq!(r.headers()["content-type"], "application/x-ndjson");
        let mut events = Vec::new();
        let mut pending = Vec::new();
        while let Some(chunk) = r.chunk().await.unwrap() {
            pending.extend_from_slice(&chunk);
            while let Some(pos) = pending.iter().position(|&b| b == b'\n') {
                let line: Vec<u8> = pending.drain(..=pos).collect();
                let event: Value = serde_json::from_slice(&line[..pos]).unwrap();
                check(&event);
                events.push(event);
            }
        }
        assert!(pending.is_empty(), "stream ends on a line boundary");
        events
    }

    fn session_dir(&self, id: &str) -> PathBuf {
        self.out.path().join(id)
    }
}

fn phase_names(events: &[Value]) -> Vec<String> {
    events
        .iter()
        .filter(|e| e["kind"] == "phase_changed")
        .map(|e| match e["payload"].get("round").and_then(Value::as_u64) {
            Some(r) => format!("{}({r})", e["payload"]["phase"].as_str().unwrap()),
            None => e["payload"]["phase"].as_str().unwrap().to_string(),
        })
        .collect()
}

const CHAIN: [&str; 9] = [
    "confession",
    "contemplation",
    "response(1)",
    "response(2)",
    "response(3)",
    "response(4)",
    "release",
    "complete",
    "",
];

fn frame_count_on_disk(path: &Path) -> u32 {
    let bytes = std::fs::read(path).unwrap();
    u32::from_le_bytes(bytes[16..20].try_into().unwrap())
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn create_submit_stream_complete() {
    let server = start(3).await;
    assert_eq!(server.client.get(format!("{}/health", server.base)).send().await.unwrap().status(), 200);
    let id = server.create().await;
    let r = server.confess(&id, json!({"text": "I broke the lamp and blamed the cat"})).await;
    assert_eq!(r.status(), 202);

    let dir = server.session_dir(&id);
    let sealed_dir = server.out.path().join("sessions");
    let events = server
        .follow(&id, 0, |e| {
            // Anything an event points at is already on disk.
            match e["kind"].as_str().unwrap() {
                "frame" => {
                    let index = e["payload"]["index"].as_u64().unwrap();
                    assert!(frame_count_on_disk(&dir.join("frames.wwf")) as u64 > index);
                }
                "sealed" => {
                    let record = e["payload"]["record"].as_str().unwrap();
                    assert!(server.out.path().join(record).exists());
                    assert!(sealed_dir.join(format!("{id}.wwr")).exists());
                }
                "phase_changed" if e["payload"]["phase"] == "complete" => {
                    for name in e["payload"]["artifacts"].as_array().unwrap() {
                        assert!(dir.join(name.as_str().unwrap()).exists(), "{name}");
                    }
                }
                _ => {}
            }
        })
        .await;

    for (i, e) in events.iter().enumerate() {
        assert_eq!(e["seq"], i as u64, "seq strictly increasing from 0");
        assert_eq!(e["session_id"], id.as_str());
    }
    assert_eq!(phase_names(&events), CHAIN[..8]);
    assert!(events.iter().any(|e| e["kind"] == "emotion"));
    assert!(events.iter().filter(|e| e["kind"] == "frame").count() > 10);
    assert_eq!(events.iter().filter(|e| e["kind"] == "sealed").count(), 1);
    let last = events.last().unwrap();
    assert_eq!(last["payload"]["sealed"], true);

    // Artifacts over HTTP.
    let wav = server.client.get(format!("{}/sessions/{id}/artifacts/ch3.wav", server.base)).send().await.unwrap();
    assert_eq!(wav.status(), 200);
    assert_eq!(wav.headers()["content-type"], "audio/wav");
    let audio = read_wav_bytes(&wav.bytes().await.unwrap()).unwrap();
    assert!(audio.rms() > 0.0);
    let frames = server.client.get(format!("{}/sessions/{id}/artifacts/frames.wwf", server.base)).send().await.unwrap();
    assert_eq!(&frames.bytes().await.unwrap()[..4], b"WWF1");
    let waveset: Value = server.client.get(format!("{}/sessions/{id}/artifacts/waveset.json", server.base)).send().await.unwrap().json().await.unwrap();
    assert!(waveset["segments"].as_array().unwrap().len() >= 9);
    for bad in ["transcript.json", "..%2F..%2Fetc%2Fpasswd", "sessions"] {
        let r = server.client.get(format!("{}/sessions/{id}/artifacts/{bad}", server.base)).send().await.unwrap();
        assert_eq!(r.status(), 404, "{bad}");
    }

    // The stored log keeps structure but not words.
    let replay = server.follow(&id, 0, |_| {}).await;
    assert_eq!(replay.len(), events.len());
    for e in &replay {
        if matches!(e["kind"].as_str().unwrap(), "agent_token" | "utterance" | "emotion") {
            assert_eq!(e["payload"]["redacted"], true);
            assert!(e["payload"].get("text").is_none());
        }
    }
    let body = serde_json::to_string(&replay).unwrap();
    assert!(!body.contains("lamp"));
    assert!(!body.contains("reflects"));

    let status: Value = server.client.get(format!("{}/sessions/{id}", server.base)).send().await.unwrap().json().await.unwrap();
    assert_eq!(status["state"], "finished");
    assert_eq!(status["phase"]["phase"], "complete");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn second_confession_conflicts() {
    let server = start(4).await;
    let id = server.create().await;
    assert_eq!(server.confess(&id, json!({"text": "first"})).await.status(), 202);
    let r = server.confess(&id, json!({"text": "second"})).await;
    assert_eq!(r.status(), 409);
    let body: Value = r.json().await.unwrap();
    assert!(body["error"].as_str().unwrap().contains("not awaiting"));
    server.follow(&id, 0, |_| {}).await;
    assert_eq!(server.confess(&id, json!({"text": "third"})).await.status(), 409);
}

#[tokio::test]
async fn bad_requests() {
    let server = start(5).await;
    assert_eq!(server.confess("nope", json!({"text": "x"})).await.status(), 404);
    let r = server.client.get(format!("{}/sessions/nope/events", server.base)).send().await.unwrap();
    assert_eq!(r.status(), 404);

    let id = server.create().await;
    assert_eq!(server.confess(&id, json!({"text": "   "})).await.status(), 400);
    assert_eq!(server.confess(&id, json!({"words": "x"})).await.status(), 400);
    assert_eq!(server.confess(&id, json!({"audio_b64": "!!!"})).await.status(), 400);
    // Audio without a transcript: the offline recognizer has no sidecar.
    let wav = wav_bytes(&AudioBuffer::from_fn(1.0, 16_000, |t| (600.0 * t).sin() * 0.3), WavEncoding::Pcm16).unwrap();
    let b64 = base64::engine::general_purpose::STANDARD.encode(&wav);
    let r = server.confess(&id, json!({"audio_b64": b64})).await;
    assert_eq!(r.status(), 422);
    // Failed submissions leave the session waiting.
    assert_eq!(server.confess(&id, json!({"text": "now in words"})).await.status(), 202);
    let events = server.follow(&id, 0, |_| {}).await;
    assert_eq!(phase_names(&events).last().unwrap(), "complete");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn wav_upload_with_transcript() {
    let server = start(6).await;
    let id = server.create().await;
    let audio = AudioBuffer::from_fn(20.0, 16_000, |t| {
        (1..=8).map(|h| (std::f64::consts::TAU * 120.0 * h as f64 * t).sin() / h as f64).sum::<f64>() * 0.2
    });
    let wav = wav_bytes(&audio, WavEncoding::Pcm16).unwrap();
    let r = server
        .client
        .post(format!("{}/sessions/{id}/confession?transcript=hello%20water", server.base))
        .header("content-type", "audio/wav")
        .body(wav)
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 202, "{}", r.text().await.unwrap());
    let events = server.follow(&id, 0, |_| {}).await;
    assert_eq!(phase_names(&events), CHAIN[..8]);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn resume_and_concurrent_sessions() {
    let server = start(8).await;
    let mut ids = Vec::new();
    for k in 0..3 {
        let id = server.create().await;
        assert_eq!(server.confess(&id, json!({"text": format!("confession number {k}")})).await.status(), 202);
        ids.push(id);
    }
    let all = futures::future::join_all(ids.iter().map(|id| server.follow(id, 0, |_| {}))).await;
    for (id, events) in ids.iter().zip(&all) {
        assert_eq!(phase_names(events), CHAIN[..8]);
        let tail = server.follow(id, 10, |_| {}).await;
        assert_eq!(tail.len(), events.len() - 10);
        assert_eq!(tail[0]["seq"], 10);
        let beyond = server.follow(id, events.len() + 5, |_| {}).await;
        assert!(beyond.is_empty());
    }
    let health: Value = server.client.get(format!("{}/health", server.base)).send().await.unwrap().json().await.unwrap();
    assert_eq!(health["sessions"], 3);
}

#[tokio::test]
async fn sidecar_asr_rule() {
    let dir = tempfile::tempdir().unwrap();
    let audio = AudioBuffer::silence(1.0, 16_000);
    let wav = dir.path().join("hello.wav");
    let err = SidecarAsr.transcribe(&audio, Some(&wav)).await.unwrap_err();
    assert!(matches!(err, GatewayError::AsrUnavailable(_)));
    std::fs::write(dir.path().join("hello.txt"), "  what I said \n").unwrap();
    assert_eq!(SidecarAsr.transcribe(&audio, Some(&wav)).await.unwrap(), "what I said");
    assert!(matches!(SidecarAsr.transcribe(&audio, None).await.unwrap_err(), GatewayError::AsrUnavailable(_)));
    let long = AudioBuffer::silence(16.0, 16_000);
    assert!(matches!(SidecarAsr.transcribe(&long, Some(&wav)).await.unwrap_err(), GatewayError::Input(_)));
}

#[tokio::test]
async fn http_asr_contract() {
    // The stub decodes the WAV it is sent and reports its length.
    let app = Router::new()
        .route(
            "/asr",
            post(|headers: axum::http::HeaderMap, Json(req): Json<AsrRequest>| async move {
                assert_eq!(headers["authorization"], "Bearer sekrit");
                let wav = base64::engine::general_purpose::STANDARD.decode(req.audio_b64).unwrap();
                let audio = read_wav_bytes(&wav).unwrap();
                Json(json!({"text": format!("heard {} samples at {}", audio.len(), audio.sample_rate())}))
            }),
        )
        .route("/empty", post(|| async { Json(json!({"text": " "})) }))
        .route("/broken", post(|| async { (axum::http::StatusCode::BAD_GATEWAY, "down") }));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });

    let audio = AudioBuffer::silence(0.5, 16_000);
    let asr = HttpAsr::new(format!("{base}/asr"), Some("sekrit".into())).unwrap();
    assert_eq!(asr.transcribe(&audio, None).await.unwrap(), "heard 8000 samples at 16000");
    assert!(!format!("{asr:?}").contains("sekrit"));
    for path in ["empty", "broken"] {
        let asr = HttpAsr::new(format!("{base}/{path}"), None).unwrap();
        assert!(matches!(asr.transcribe(&audio, None).await.unwrap_err(), GatewayError::AsrUnavailable(_)), "{path}");
    }
    let dead = HttpAsr::new("http://127.0.0.1:9/asr", None).unwrap();
    assert!(matches!(dead.transcribe(&audio, None).await.unwrap_err(), GatewayError::AsrUnavailable(_)));
}
