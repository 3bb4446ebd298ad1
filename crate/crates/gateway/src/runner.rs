//! Pieces shared by the CLI and the service: building providers from config,
//! turning input into a confession, and persisting artifacts as a session runs.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::{json, Value};
use ww_core::watersim::{render_frame, write_png, Frame, WwfWriter};
use ww_core::wav::{read_wav, write_wav_samples, WavEncoding};
use ww_core::AudioBuffer;
use ww_engine::ritual::{
    Confession, EncryptedRecord, RitualDeps, RitualHost, SealKey, Segment, SessionEvent, Timeline, MAX_CONFESSION_SECONDS,
};
use ww_engine::EngineError;

use crate::asr::AsrProvider;
use crate::config::EngineConfig;
use crate::error::GatewayError;

pub const CHANNEL_FILES: [&str; 6] = ["ch1.wav", "ch2.wav", "ch3.wav", "ch4.wav", "ch5.wav", "ch6.wav"];
pub const FRAMES_FILE: &str = "frames.wwf";
pub const WAVESET_FILE: &str = "waveset.json";
pub const TRANSCRIPT_FILE: &str = "transcript.json";
pub const SEALED_DIR: &str = "sessions";

/// Where the seal key came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeySource {
    Environment,
    /// `--mock` without `WW_SEAL_KEY`: the fixed, public mock key.
    MockFallback,
    /// No key: sessions are discarded at release.
    Missing,
}

pub struct Services {
    pub config: EngineConfig,
    pub deps: RitualDeps,
    pub asr: Arc<dyn AsrProvider>,
    pub key_source: KeySource,
}

impl Services {
    /// `mock_seed` replaces every external provider with its offline
    /// counterpart.
    pub fn build(config: EngineConfig, mock_seed: Option<u64>) -> Result<Self, GatewayError> {
        let config = match mock_seed {
            Some(seed) => config.into_mock(seed),
            None => config,
        };
        config.validate()?;
        let (key, key_source) = match SealKey::from_env()? {
            Some(key) => (Some(key), KeySource::Environment),
            None if mock_seed.is_some() => (Some(SealKey::mock()), KeySource::MockFallback),
            None => (None, KeySource::Missing),
        };
        let mut deps = RitualDeps::new(config.dialogue()?, config.tts()?, config.emotion()?, config.tank.clone());
        deps.frame_rate = config.frame_rate;
        deps.seal_key = key.map(Arc::new);
        let asr = config.asr()?;
        Ok(Self { config, deps, asr, key_source })
    }
}

/// Reads a `.txt` confession or transcribes a `.wav` one.
pub async fn load_confession(path: &Path, asr: &dyn AsrProvider) -> Result<Confession, GatewayError> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("txt") => {
            let text = tokio::fs::read_to_string(path).await?;
            text_confession(&text)
        }
        Some("wav") => {
            let audio = read_wav(path)?;
            audio_confession(audio, None, asr, Some(path)).await
        }
        _ => Err(GatewayError::Input(format!("{}: expected a .wav or .txt file", path.display()))),
    }
}

pub fn text_confession(text: &str) -> Result<Confession, GatewayError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(GatewayError::Input("confession text is empty".into()));
    }
    Ok(Confession::text(text))
}

/// Caps the audio, then uses `transcript` if given or asks the ASR provider.
pub async fn audio_confession(
    mut audio: AudioBuffer,
    transcript: Option<String>,
    asr: &dyn AsrProvider,
    source: Option<&Path>,
) -> Result<Confession, GatewayError> {
    if audio.is_empty() {
        return Err(GatewayError::Input("confession audio is empty".into()));
    }
    audio.truncate_seconds(MAX_CONFESSION_SECONDS);
    let text = match transcript.map(|t| t.trim().to_string()).filter(|t| !t.is_empty()) {
        Some(t) => t,
        None => asr.transcribe(&audio, source).await?,
    };
    Ok(Confession { text, audio: Some(audio) })
}

/// Persists frames, the sealed record and the channel signals as the driver
/// reports them, always before the matching event goes out.
pub struct ArtifactHost<S: FnMut(SessionEvent) + Send> {
    dir: PathBuf,
    sealed_dir: Option<PathBuf>,
    frames: Option<WwfWriter>,
    png_dir: Option<PathBuf>,
    png_count: usize,
    sink: S,
}

impl<S: FnMut(SessionEvent) + Send> ArtifactHost<S> {
    /// `dir` receives per-run files; `sealed_dir`, when set, receives
    /// `{session_id}.wwr`.
    pub fn new(dir: impl Into<PathBuf>, sealed_dir: Option<PathBuf>, sink: S) -> Result<Self, GatewayError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir, sealed_dir, frames: None, png_dir: None, png_count: 0, sink })
    }

    pub fn with_frames(mut self, nx: usize, ny: usize, frame_rate: u32) -> Result<Self, GatewayError> {
        self.frames = Some(WwfWriter::create(self.dir.join(FRAMES_FILE), nx, ny, frame_rate)?);
        Ok(self)
    }

    pub fn with_png(mut self) -> Result<Self, GatewayError> {
        let dir = self.dir.join("frames");
        std::fs::create_dir_all(&dir)?;
        self.png_dir = Some(dir);
        Ok(self)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl<S: FnMut(SessionEvent) + Send> RitualHost for ArtifactHost<S> {
    fn emit(&mut self, event: SessionEvent) {
        (self.sink)(event);
    }

    fn frames(&mut self, frames: &[Frame]) -> Result<(), EngineError> {
        if let Some(writer) = &mut self.frames {
            for frame in frames {
                writer.push(frame)?;
            }
            writer.flush()?;
        }
        if let Some(dir) = &self.png_dir {
            let (nx, ny) = match &self.frames {
                Some(w) => w.dims(),
                None => return Ok(()),
            };
            for frame in frames {
                let image = render_frame(&frame.data, nx, ny);
                write_png(dir.join(format!("frame_{:05}.png", self.png_count)), &image)?;
                self.png_count += 1;
            }
        }
        Ok(())
    }

    fn sealed(&mut self, record: &EncryptedRecord) -> Result<Value, EngineError> {
        let Some(dir) = &self.sealed_dir else {
            return Ok(json!({"retained": false}));
        };
        std::fs::create_dir_all(dir)?;
        let name = format!("{}.wwr", record.session_id);
        std::fs::write(dir.join(&name), record.to_bytes())?;
        Ok(json!({"retained": true, "record": format!("{SEALED_DIR}/{name}")}))
    }

    fn finished(&mut self, timeline: &Timeline, segments: &[Segment]) -> Result<Value, EngineError> {
        let mut artifacts: Vec<&str> = Vec::new();
        for (channel, name) in timeline.channels.iter().zip(CHANNEL_FILES) {
            let samples: Vec<f64> = channel.iter().map(|&s| s as f64).collect();
            write_wav_samples(self.dir.join(name), &samples, timeline.sample_rate, WavEncoding::Float32)?;
            artifacts.push(name);
        }
        let waveset = json!({
            "sample_rate": timeline.sample_rate,
            "duration_seconds": timeline.duration_seconds(),
            "segments": segments,
        });
        std::fs::write(self.dir.join(WAVESET_FILE), serde_json::to_vec_pretty(&waveset).map_err(|e| EngineError::InvalidInput(e.to_string()))?)?;
        artifacts.push(WAVESET_FILE);
        if let Some(writer) = self.frames.take() {
            writer.finish()?;
            artifacts.push(FRAMES_FILE);
        }
        Ok(json!({"artifacts": artifacts}))
    }
}
