//! Speech-to-text providers. The engine consumes transcripts only; these
//! turn an uploaded or local WAV into text.

use std::path::Path;
use std::time::Duration;

use async_trait::async_trait;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use ww_core::wav::{wav_bytes, WavEncoding};
use ww_core::AudioBuffer;

use crate::error::GatewayError;

/// Longest confession accepted for transcription.
pub const MAX_ASR_SECONDS: f64 = 15.0;

#[async_trait]
pub trait AsrProvider: Send + Sync {
    fn name(&self) -> &str;

    /// `source` is the file the audio came from, when there is one.
    async fn transcribe(&self, audio: &AudioBuffer, source: Option<&Path>) -> Result<String, GatewayError>;
}

/// Reads `<name>.txt` next to `<name>.wav`. Keeps everything offline.
#[derive(Debug, Clone, Copy, Default)]
pub struct SidecarAsr;

impl SidecarAsr {
    pub fn sidecar_path(wav: &Path) -> std::path::PathBuf {
        wav.with_extension("txt")
    }
}

#[async_trait]
impl AsrProvider for SidecarAsr {
    fn name(&self) -> &str {
        "sidecar"
    }

    async fn transcribe(&self, audio: &AudioBuffer, source: Option<&Path>) -> Result<String, GatewayError> {
        check_length(audio)?;
        let wav = source.ok_or_else(|| GatewayError::AsrUnavailable("no sidecar transcript for uploaded audio".into()))?;
        let path = Self::sidecar_path(wav);
        let text = tokio::fs::read_to_string(&path)
            .await
            .map_err(|_| GatewayError::AsrUnavailable(format!("no sidecar transcript at {}", path.display())))?;
        let text = text.trim();
        if text.is_empty() {
            return Err(GatewayError::AsrUnavailable(format!("{} is empty", path.display())));
        }
        Ok(text.to_string())
    }
}

fn check_length(audio: &AudioBuffer) -> Result<(), GatewayError> {
    // One sample of slack for rounding in upstream truncation.
    if audio.duration_seconds() > MAX_ASR_SECONDS + 1.0 / audio.sample_rate() as f64 {
        return Err(GatewayError::Input(format!(
            "audio is {:.2} s; transcription accepts at most {MAX_ASR_SECONDS} s",
            audio.duration_seconds()
        )));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AsrRequest {
    /// Base64 of a 16-bit PCM WAV file.
    pub audio_b64: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AsrResponse {
    pub text: String,
}

/// `POST {audio_b64}` → `{text}`.
pub struct HttpAsr {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::Client,
}

impl std::fmt::Debug for HttpAsr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpAsr").field("endpoint", &self.endpoint).finish_non_exhaustive()
    }
}

impl HttpAsr {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Result<Self, GatewayError> {
        let client = reqwest::Client::builder()
            .connect_timeout(Duration::from_secs(10))
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| GatewayError::AsrUnavailable(e.to_string()))?;
        Ok(Self { endpoint: endpoint.into(), api_key, client })
    }
}

#[async_trait]
impl AsrProvider for HttpAsr {
    fn name(&self) -> &str {
        "http-asr"
    }

    async fn transcribe(&self, audio: &AudioBuffer, _source: Option<&Path>) -> Result<String, GatewayError> {
        check_length(audio)?;
        let wav = wav_bytes(audio, WavEncoding::Pcm16)?;
        let request = AsrRequest { audio_b64: base64::engine::general_purpose::STANDARD.encode(wav) };
        let mut builder = self.client.post(&self.endpoint).json(&request);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().await.map_err(|e| GatewayError::AsrUnavailable(e.without_url().to_string()))?;
        if !response.status().is_success() {
            return Err(GatewayError::AsrUnavailable(format!("HTTP {}", response.status())));
        }
        let body: AsrResponse = response
            .json()
            .await
            .map_err(|e| GatewayError::AsrUnavailable(format!("malformed response: {}", e.without_url())))?;
        let text = body.text.trim();
        if text.is_empty() {
            return Err(GatewayError::AsrUnavailable("empty transcript".into()));
        }
        Ok(text.to_string())
    }
}
