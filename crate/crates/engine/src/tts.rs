//! Text-to-speech providers.

use std::f64::consts::TAU;
use std::time::Duration;

use async_trait::async_trait;
use ring::digest;
use serde::Serialize;
use zeroize::Zeroizing;

use crate::agents::{PersonaDescriptor, Utterance};
use crate::error::{EngineError, ProviderError};
use ww_core::AudioBuffer;

#[async_trait]
pub trait TtsProvider: Send + Sync {
    fn name(&self) -> &str;

    async fn synthesize(&self, text: &str, persona: &PersonaDescriptor) -> Result<AudioBuffer, EngineError>;
}

/// Attaches synthesized audio to an utterance.
pub async fn synthesize_tts(provider: &dyn TtsProvider, mut utterance: Utterance) -> Result<Utterance, EngineError> {
    if utterance.text.trim().is_empty() {
        return Err(EngineError::InvalidInput("cannot speak empty text".into()));
    }
    let audio = provider.synthesize(&utterance.text, &utterance.persona).await?;
    utterance.audio = Some(audio);
    Ok(utterance)
}

pub const REFERENCE_TTS_RATE: u32 = 16_000;
pub const SECONDS_PER_CHAR: f64 = 0.060;

/// Deterministic stand-in voice: each character becomes a 60 ms voiced
/// segment (a harmonic series shaped by two formant peaks). Pitch and
/// formant scaling come from the voice id; the intonation contour comes from
/// the text hash. Whitespace is a short breath at low level.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceTts;

const VOWEL_FORMANTS: [(f64, f64); 5] = [(730.0, 1090.0), (530.0, 1840.0), (270.0, 2290.0), (570.0, 840.0), (300.0, 870.0)];

fn sha256(parts: &[&[u8]]) -> [u8; 32] {
    let mut ctx = digest::Context::new(&digest::SHA256);
    for p in parts {
        ctx.update(&(p.len() as u64).to_le_bytes());
        ctx.update(p);
    }
    ctx.finish().as_ref().try_into().unwrap()
}

fn unit(byte: u8) -> f64 {
    byte as f64 / 255.0
}

impl ReferenceTts {
    pub fn render(text: &str, voice_id: &str) -> AudioBuffer {
        let voice = sha256(&[b"voice", voice_id.as_bytes()]);
        let contour = sha256(&[b"text", voice_id.as_bytes(), text.as_bytes()]);
        let base_f0 = 100.0 + 120.0 * unit(voice[0]);
        let formant_scale = 0.9 + 0.25 * unit(voice[1]);

        let rate = REFERENCE_TTS_RATE as f64;
        let seg_len = (SECONDS_PER_CHAR * rate).round() as usize;
        let ramp = (0.008 * rate) as usize;
        let chars: Vec<char> = text.chars().collect();
        let mut samples = Vec::with_capacity(chars.len() * seg_len);
        let mut phase = 0.0f64;
        for (i, &c) in chars.iter().enumerate() {
            let bend = unit(contour[i % 32]) - 0.5;
            // gentle declination across the phrase plus a hashed wobble
            let f0 = base_f0 * (1.0 + 0.12 * bend) * (1.0 - 0.1 * i as f64 / chars.len().max(1) as f64);
            let (f1, f2) = VOWEL_FORMANTS[(c as u32 as usize) % VOWEL_FORMANTS.len()];
            let (f1, f2) = (f1 * formant_scale, f2 * formant_scale);
            let level = if c.is_whitespace() { 0.05 } else { 1.0 };
            let n_harm = (4000.0 / f0).floor() as usize;
            let gains: Vec<f64> = (1..=n_harm)
                .map(|k| {
                    let f = k as f64 * f0;
                    let peak = |fc: f64, bw: f64| 1.0 / (1.0 + ((f - fc) / bw).powi(2));
                    (peak(f1, 90.0) + 0.6 * peak(f2, 120.0) + 0.15) / k as f64
                })
                .collect();
            for n in 0..seg_len {
                let edge = n.min(seg_len - 1 - n);
                let env = if edge < ramp { 0.5 - 0.5 * (std::f64::consts::PI * edge as f64 / ramp as f64).cos() } else { 1.0 };
                let mut s = 0.0;
                for (k, g) in gains.iter().enumerate() {
                    s += g * ((k + 1) as f64 * phase).sin();
                }
                samples.push(level * env * s);
                phase = (phase + TAU * f0 / rate) % TAU;
            }
        }
        let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if peak > 0.0 {
            for s in &mut samples {
                *s *= 0.5 / peak;
            }
        }
        AudioBuffer::new(samples, REFERENCE_TTS_RATE).expect("finite samples")
    }
}

#[async_trait]
impl TtsProvider for ReferenceTts {
    fn name(&self) -> &str {
        "reference"
    }

    async fn synthesize(&self, text: &str, persona: &PersonaDescriptor) -> Result<AudioBuffer, EngineError> {
        if text.trim().is_empty() {
            return Err(EngineError::InvalidInput("cannot speak empty text".into()));
        }
        let (text, voice) = (text.to_string(), persona.voice_id.clone());
        tokio::task::spawn_blocking(move || Self::render(&text, &voice))
            .await
            .map_err(|e| EngineError::Join(e.to_string()))
    }
}

#[derive(Serialize)]
struct TtsRequest<'a> {
    text: &'a str,
    voice_id: &'a str,
}

/// `POST {text, voice_id}` → WAV bytes.
pub struct HttpTts {
    endpoint: String,
    api_key: Option<Zeroizing<String>>,
    client: reqwest::Client,
}

impl std::fmt::Debug for HttpTts {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpTts").field("endpoint", &self.endpoint).finish_non_exhaustive()
    }
}

impl HttpTts {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Result<Self, ProviderError> {
        let client = reqwest::Client::builder()
            .connect_timeout(Duration::from_secs(10))
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| ProviderError::failed("http-tts", e))?;
        Ok(Self { endpoint: endpoint.into(), api_key: api_key.map(Zeroizing::new), client })
    }
}

#[async_trait]
impl TtsProvider for HttpTts {
    fn name(&self) -> &str {
        "http-tts"
    }

    async fn synthesize(&self, text: &str, persona: &PersonaDescriptor) -> Result<AudioBuffer, EngineError> {
        if text.trim().is_empty() {
            return Err(EngineError::InvalidInput("cannot speak empty text".into()));
        }
        let mut builder = self.client.post(&self.endpoint).json(&TtsRequest { text, voice_id: &persona.voice_id });
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key.as_str());
        }
        let response = builder.send().await.map_err(|e| ProviderError::failed("http-tts", e.without_url()))?;
        if !response.status().is_success() {
            return Err(ProviderError::failed("http-tts", format!("HTTP {}", response.status())).into());
        }
        let bytes = response.bytes().await.map_err(|e| ProviderError::failed("http-tts", e.without_url()))?;
        ww_core::wav::read_wav_bytes(&bytes).map_err(|e| ProviderError::malformed("http-tts", e).into())
    }
}
