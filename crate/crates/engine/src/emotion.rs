//! Emotion classification providers.

use std::time::Duration;

use async_trait::async_trait;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use zeroize::Zeroizing;

use crate::error::{EngineError, ProviderError};
use ww_core::sentiment::{EmotionClassifier, EmotionScores, ReferenceClassifier};
use ww_core::AudioBuffer;

#[async_trait]
pub trait EmotionProvider: Send + Sync {
    fn name(&self) -> &str;

    async fn classify(&self, audio: &AudioBuffer) -> Result<EmotionScores, EngineError>;
}

/// Runs the in-process acoustic classifier on a blocking thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceEmotion;

#[async_trait]
impl EmotionProvider for ReferenceEmotion {
    fn name(&self) -> &str {
        "reference"
    }

    async fn classify(&self, audio: &AudioBuffer) -> Result<EmotionScores, EngineError> {
        let audio = audio.clone();
        tokio::task::spawn_blocking(move || ReferenceClassifier.classify(&audio))
            .await
            .map_err(|e| EngineError::Join(e.to_string()))?
            .map_err(EngineError::from)
    }
}

/// Base64 of little-endian f32 samples.
pub fn encode_audio_b64(audio: &AudioBuffer) -> String {
    let bytes: Vec<u8> = audio.samples().iter().flat_map(|&s| (s as f32).to_le_bytes()).collect();
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

pub fn decode_audio_b64(b64: &str, sample_rate: u32) -> Result<AudioBuffer, EngineError> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(b64)
        .map_err(|e| EngineError::InvalidInput(format!("audio_b64: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(EngineError::InvalidInput("audio_b64 is not a whole number of f32 samples".into()));
    }
    let samples = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
    Ok(AudioBuffer::new(samples, sample_rate)?)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmotionRequest {
    pub audio_b64: String,
    pub sample_rate: u32,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmotionResponse {
    pub scores: std::collections::BTreeMap<ww_core::sentiment::EmotionLabel, f64>,
}

/// `POST {audio_b64, sample_rate}` → `{scores: {label: p}}`.
pub struct HttpEmotion {
    endpoint: String,
    api_key: Option<Zeroizing<String>>,
    client: reqwest::Client,
}

impl std::fmt::Debug for HttpEmotion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpEmotion").field("endpoint", &self.endpoint).finish_non_exhaustive()
    }
}

impl HttpEmotion {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Result<Self, ProviderError> {
        let client = reqwest::Client::builder()
            .connect_timeout(Duration::from_secs(10))
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| ProviderError::failed("http-emotion", e))?;
        Ok(Self { endpoint: endpoint.into(), api_key: api_key.map(Zeroizing::new), client })
    }
}

#[async_trait]
impl EmotionProvider for HttpEmotion {
    fn name(&self) -> &str {
        "http-emotion"
    }

    async fn classify(&self, audio: &AudioBuffer) -> Result<EmotionScores, EngineError> {
        let body = EmotionRequest { audio_b64: encode_audio_b64(audio), sample_rate: audio.sample_rate() };
        let mut builder = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key.as_str());
        }
        let response = builder.send().await.map_err(|e| ProviderError::failed("http-emotion", e.without_url()))?;
        if !response.status().is_success() {
            return Err(ProviderError::failed("http-emotion", format!("HTTP {}", response.status())).into());
        }
        let parsed: EmotionResponse =
            response.json().await.map_err(|e| ProviderError::malformed("http-emotion", e.without_url()))?;
        EmotionScores::new(parsed.scores).map_err(|e| ProviderError::malformed("http-emotion", e).into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn audio_b64_round_trip() {
        let audio = AudioBuffer::from_fn(0.01, 16000, |t| (t * 700.0).sin() * 0.5);
        let back = decode_audio_b64(&encode_audio_b64(&audio), 16000).unwrap();
        assert_eq!(back.len(), audio.len());
        for (a, b) in audio.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() < 1e-7);
        }
        assert!(decode_audio_b64("AAA=", 16000).is_err());
    }

    #[tokio::test]
    async fn reference_matches_core() {
        let audio = AudioBuffer::from_fn(1.0, 16000, |t| 0.3 * (std::f64::consts::TAU * 150.0 * t).sin());
        let direct = ReferenceClassifier.classify(&audio).unwrap();
        assert_eq!(ReferenceEmotion.classify(&audio).await.unwrap(), direct);
    }
}
