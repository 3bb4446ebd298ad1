use std::sync::Arc;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::seal::{seal_session, EncryptedRecord, SealKey};
use super::session::{Confession, Phase, RitualEvent, RitualSession};
use crate::agents::{Dialogue, PersonaDescriptor, StreamEvent, StreamEventKind, Transcript, Utterance};
use crate::emotion::EmotionProvider;
use crate::error::EngineError;
use crate::tts::TtsProvider;
use ww_core::sentiment::{contemplation_waveform, emotion_to_band, EmotionLabel, EmotionScores};
use ww_core::signal::{decompose_speech, synthesize_waveset, ChannelWaveform, WaveSetSummary, DEFAULT_OUT_RATE};
use ww_core::watersim::{Frame, FrameRecorder, TankConfig, WaterSim};
use ww_core::AudioBuffer;

pub const CONTEMPLATION_SECONDS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionEventKind {
    PhaseChanged,
    AgentToken,
    Utterance,
    Frame,
    Emotion,
    Error,
    Sealed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub kind: SessionEventKind,
    pub session_id: String,
    /// Strictly increasing within a session, starting at 0.
    pub seq: u64,
    pub payload: Value,
}

/// Where a running session sends its events and artifacts. `frames` and
/// `sealed` run before the corresponding events are emitted, so anything an
/// event refers to is already persisted.
pub trait RitualHost: Send {
    fn emit(&mut self, event: SessionEvent);

    fn frames(&mut self, _frames: &[Frame]) -> Result<(), EngineError> {
        Ok(())
    }

    /// Persists the record; the returned object is merged into the `sealed`
    /// event payload.
    fn sealed(&mut self, _record: &EncryptedRecord) -> Result<Value, EngineError> {
        Ok(json!({}))
    }

    /// Called once the water is still, before the final `complete` event;
    /// the returned object is merged into that event's payload.
    fn finished(&mut self, _timeline: &Timeline, _segments: &[Segment]) -> Result<Value, EngineError> {
        Ok(json!({}))
    }
}

impl RitualHost for Vec<SessionEvent> {
    fn emit(&mut self, event: SessionEvent) {
        self.push(event);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StillnessCriterion {
    pub rms_m: f64,
    pub timeout_s: f64,
}

impl Default for StillnessCriterion {
    fn default() -> Self {
        Self { rms_m: 1e-6, timeout_s: 10.0 }
    }
}

/// Everything a session needs besides its input.
#[derive(Clone)]
pub struct RitualDeps {
    pub dialogue: Dialogue,
    pub tts: Arc<dyn TtsProvider>,
    pub emotion: Arc<dyn EmotionProvider>,
    pub tank: TankConfig,
    /// Snapshot rate; 0 records no frames.
    pub frame_rate: u32,
    pub out_rate: u32,
    pub contemplation_seconds: f64,
    pub stillness: StillnessCriterion,
    pub seal_key: Option<Arc<SealKey>>,
    /// Keep a plaintext copy of the transcript in the outcome. Only for
    /// offline mock runs.
    pub export_plaintext: bool,
}

impl RitualDeps {
    pub fn new(dialogue: Dialogue, tts: Arc<dyn TtsProvider>, emotion: Arc<dyn EmotionProvider>, tank: TankConfig) -> Self {
        Self {
            dialogue,
            tts,
            emotion,
            tank,
            frame_rate: 10,
            out_rate: DEFAULT_OUT_RATE,
            contemplation_seconds: CONTEMPLATION_SECONDS,
            stillness: StillnessCriterion::default(),
            seal_key: None,
            export_plaintext: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivityInterval {
    pub channel: u8,
    pub start_s: f64,
    pub end_s: f64,
}

/// One stretch of forcing applied to the tank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub label: String,
    pub phase: Phase,
    pub agent_id: Option<u8>,
    pub start_s: f64,
    pub end_s: f64,
    /// Field RMS just before the forcing starts: the residue of what came
    /// before.
    pub onset_rms: f64,
    /// Per channel, from first to last non-zero sample.
    pub activity: Vec<ActivityInterval>,
    pub waveset: Option<WaveSetSummary>,
}

/// The six channel signals of a whole session, end to end.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub sample_rate: u32,
    pub channels: [Vec<f32>; 6],
}

impl Timeline {
    fn new(sample_rate: u32) -> Self {
        Self { sample_rate, channels: Default::default() }
    }

    fn append(&mut self, waves: &[ChannelWaveform]) {
        let len = waves.iter().map(|w| w.samples.len()).max().unwrap_or(0);
        for (k, channel) in self.channels.iter_mut().enumerate() {
            let start = channel.len();
            if let Some(w) = waves.iter().find(|w| w.channel as usize == k + 1) {
                channel.extend(w.samples.iter().map(|&s| s as f32));
            }
            channel.resize(start + len, 0.0);
        }
    }

    fn append_silence(&mut self, seconds: f64) {
        let n = (seconds * self.sample_rate as f64).round() as usize;
        for channel in &mut self.channels {
            channel.resize(channel.len() + n, 0.0);
        }
    }

    pub fn duration_seconds(&self) -> f64 {
        self.channels[0].len() as f64 / self.sample_rate as f64
    }

    pub fn waveforms(&self) -> Vec<ChannelWaveform> {
        self.channels
            .iter()
            .enumerate()
            .map(|(k, c)| ChannelWaveform {
                channel: k as u8 + 1,
                samples: c.iter().map(|&s| s as f64).collect(),
                sample_rate: self.sample_rate,
            })
            .collect()
    }
}

#[derive(Debug)]
pub struct SessionOutcome {
    /// Sealed (or discarded) session; holds no plaintext.
    pub session: RitualSession,
    pub record: Option<EncryptedRecord>,
    pub segments: Vec<Segment>,
    pub timeline: Timeline,
    pub frame_count: u64,
    /// Whether the field fell below the stillness threshold before timeout.
    pub reached_stillness: bool,
    pub final_rms: f64,
    /// Present only with `export_plaintext`.
    pub plaintext_transcript: Option<Transcript>,
}

struct Tank {
    sim: WaterSim,
    recorder: FrameRecorder,
}

struct Emitter<'h, H: RitualHost> {
    session_id: String,
    seq: u64,
    host: &'h mut H,
}

impl<H: RitualHost> Emitter<'_, H> {
    fn emit(&mut self, kind: SessionEventKind, payload: Value) {
        let event = SessionEvent { kind, session_id: self.session_id.clone(), seq: self.seq, payload };
        self.seq += 1;
        self.host.emit(event);
    }

    fn error(&mut self, phase: Phase, agent_id: Option<u8>, message: impl std::fmt::Display) {
        tracing::warn!(%phase, ?agent_id, %message, "session error");
        self.emit(SessionEventKind::Error, json!({"phase": phase, "agent_id": agent_id, "message": message.to_string()}));
    }

    fn phase(&mut self, phase: Phase, detail: Value) {
        let mut payload = serde_json::to_value(phase).expect("serializable");
        if let (Value::Object(map), Value::Object(extra)) = (&mut payload, detail) {
            map.extend(extra);
        }
        self.emit(SessionEventKind::PhaseChanged, payload);
    }

    fn stream(&mut self, event: StreamEvent) {
        match event.kind {
            StreamEventKind::Token => self.emit(
                SessionEventKind::AgentToken,
                json!({"agent_id": event.agent_id, "round": event.round, "text": event.payload}),
            ),
            StreamEventKind::Error => self.error(Phase::Response(event.round), event.agent_id, event.payload),
            // Utterances are announced with their persona once the round settles.
            StreamEventKind::UtteranceDone | StreamEventKind::RoundDone => {}
        }
    }
}

/// Runs one session from confession to sealed record.
///
/// `session` may be fresh (`Idle`) or already waiting in `Confession`.
pub async fn run_session<H: RitualHost>(
    deps: &RitualDeps,
    session: RitualSession,
    confession: Confession,
    host: &mut H,
) -> Result<SessionOutcome, EngineError> {
    let tank = WaterSim::new(deps.tank.clone())?;
    let recorder = if deps.frame_rate == 0 {
        FrameRecorder::disabled(deps.tank.grid_nx, deps.tank.grid_ny)
    } else {
        if deps.frame_rate as f64 > 1.0 / tank.dt() {
            return Err(EngineError::InvalidConfig(format!("frame rate {} exceeds the simulation rate", deps.frame_rate)));
        }
        FrameRecorder::new(deps.tank.grid_nx, deps.tank.grid_ny, deps.frame_rate, tank.dt())
    };
    let run = Run {
        deps,
        emitter: Emitter { session_id: session.session_id.clone(), seq: 0, host },
        session,
        tank: Some(Tank { sim: tank, recorder }),
        segments: Vec::new(),
        timeline: Timeline::new(deps.out_rate),
        frame_count: 0,
    };
    run.execute(confession).await
}

impl RitualDeps {
    pub async fn run<H: RitualHost>(&self, session: RitualSession, confession: Confession, host: &mut H) -> Result<SessionOutcome, EngineError> {
        run_session(self, session, confession, host).await
    }
}

struct Run<'a, 'h, H: RitualHost> {
    deps: &'a RitualDeps,
    emitter: Emitter<'h, H>,
    session: RitualSession,
    tank: Option<Tank>,
    segments: Vec<Segment>,
    timeline: Timeline,
    frame_count: u64,
}

impl<H: RitualHost> Run<'_, '_, H> {
    fn advance(&mut self, event: RitualEvent, detail: Value) -> Result<Phase, EngineError> {
        let before = self.session.phase();
        let after = self.session.advance(event)?;
        if after != before {
            self.emitter.phase(after, detail);
        }
        Ok(after)
    }

    async fn execute(mut self, confession: Confession) -> Result<SessionOutcome, EngineError> {
        if self.session.phase() == Phase::Idle {
            self.advance(RitualEvent::Begin, json!({}))?;
        }
        let text = confession.text.clone();
        self.advance(RitualEvent::RecordingComplete(confession), json!({}))?;

        self.contemplate().await?;
        self.advance(RitualEvent::AnalysisComplete, json!({}))?;

        let mut transcript = Transcript::new(text.clone());
        let completed = self.respond(&mut transcript).await?;
        self.session.transcript = Some(transcript);
        if !completed {
            self.advance(RitualEvent::ResponseAborted, json!({"aborted": true}))?;
        }

        // Release: let the water come to rest.
        let stillness = self.deps.stillness;
        let start = self.sim_time();
        let reached = self
            .with_tank(move |tank| {
                let reached = tank.sim.settle(stillness.rms_m, stillness.timeout_s, &mut tank.recorder)?;
                Ok((reached, tank.sim.field_rms()))
            })
            .await?;
        let (reached_stillness, final_rms) = reached;
        self.timeline.append_silence(self.sim_time() - start);
        self.session.advance(RitualEvent::StillnessReached)?;

        let plaintext_transcript = if self.deps.export_plaintext { self.session.transcript.clone() } else { None };
        let record = match seal_session(&mut self.session, self.deps.seal_key.as_deref()) {
            Ok(record) => {
                let mut payload = json!({"key_id": record.key_id, "bytes": record.to_bytes().len()});
                let extra = self.emitter.host.sealed(&record)?;
                if let (Value::Object(map), Value::Object(extra)) = (&mut payload, extra) {
                    map.extend(extra);
                }
                self.emitter.emit(SessionEventKind::Sealed, payload);
                Some(record)
            }
            Err(EngineError::SealFailed(message)) if self.session.is_discarded() => {
                self.emitter.error(Phase::Release, None, &message);
                None
            }
            Err(e) => return Err(e),
        };
        let mut detail = self.emitter.host.finished(&self.timeline, &self.segments)?;
        if let Value::Object(map) = &mut detail {
            map.insert("sealed".into(), self.session.is_sealed().into());
            map.insert("discarded".into(), self.session.is_discarded().into());
        }
        self.emitter.phase(Phase::Complete, detail);
        Ok(SessionOutcome {
            session: self.session,
            record,
            segments: self.segments,
            timeline: self.timeline,
            frame_count: self.frame_count,
            reached_stillness,
            final_rms,
            plaintext_transcript,
        })
    }

    fn sim_time(&self) -> f64 {
        self.tank.as_ref().map_or(0.0, |t| t.sim.state().t)
    }

    /// Runs blocking work on the tank off the async threads, then forwards
    /// any new frames.
    async fn with_tank<T: Send + 'static>(
        &mut self,
        work: impl FnOnce(&mut Tank) -> Result<T, ww_core::Error> + Send + 'static,
    ) -> Result<T, EngineError> {
        let mut tank = self.tank.take().ok_or_else(|| EngineError::Join("tank lost after a failed step".into()))?;
        let (tank, result, frames) = tokio::task::spawn_blocking(move || {
            let result = work(&mut tank);
            let frames = tank.recorder.drain();
            (tank, result, frames)
        })
        .await
        .map_err(|e| EngineError::Join(e.to_string()))?;
        self.tank = Some(tank);
        self.publish_frames(&frames)?;
        Ok(result?)
    }

    fn publish_frames(&mut self, frames: &[Frame]) -> Result<(), EngineError> {
        if frames.is_empty() {
            return Ok(());
        }
        self.emitter.host.frames(frames)?;
        let (nx, ny) = (self.deps.tank.grid_nx, self.deps.tank.grid_ny);
        let phase = self.session.phase();
        for frame in frames {
            let (w, h, preview) = preview(frame, nx, ny);
            self.emitter.emit(
                SessionEventKind::Frame,
                json!({
                    "index": self.frame_count,
                    "t": frame.t,
                    "phase": phase,
                    "min": frame.min,
                    "max": frame.max,
                    "rms": frame.rms(),
                    "w": w,
                    "h": h,
                    "preview_b64": base64::engine::general_purpose::STANDARD.encode(preview),
                }),
            );
            self.frame_count += 1;
        }
        Ok(())
    }

    /// Drives six channel signals through the tank and records the segment.
    async fn drive(
        &mut self,
        label: String,
        agent_id: Option<u8>,
        channels: Vec<ChannelWaveform>,
        waveset: Option<WaveSetSummary>,
    ) -> Result<(), EngineError> {
        let phase = self.session.phase();
        let start_s = self.sim_time();
        let activity = channels
            .iter()
            .filter_map(|w| {
                let first = w.samples.iter().position(|s| s.abs() > 0.0)?;
                let last = w.samples.iter().rposition(|s| s.abs() > 0.0)?;
                let rate = w.sample_rate as f64;
                Some(ActivityInterval {
                    channel: w.channel,
                    start_s: start_s + first as f64 / rate,
                    end_s: start_s + (last + 1) as f64 / rate,
                })
            })
            .collect();
        self.timeline.append(&channels);
        let onset_rms = self
            .with_tank(move |tank| {
                let onset = tank.sim.field_rms();
                tank.sim.drive(&channels, &mut tank.recorder)?;
                Ok(onset)
            })
            .await?;
        self.segments.push(Segment { label, phase, agent_id, start_s, end_s: self.sim_time(), onset_rms, activity, waveset });
        Ok(())
    }

    async fn contemplate(&mut self) -> Result<(), EngineError> {
        let phase = self.session.phase();
        let confession = self.session.confession.as_ref().expect("set on recording-complete");
        let audio = match &confession.audio {
            Some(audio) => Some(audio.clone()),
            // Typed confession: classify a synthetic reading of it.
            None => match self.deps.tts.synthesize(&confession.text, &PersonaDescriptor::neutral()).await {
                Ok(audio) => Some(audio),
                Err(e) => {
                    self.emitter.error(phase, None, format!("tts for emotion analysis: {e}"));
                    None
                }
            },
        };
        let scores = match audio {
            Some(audio) => match self.deps.emotion.classify(&audio).await {
                Ok(scores) => scores,
                Err(e) => {
                    self.emitter.error(phase, None, format!("emotion analysis: {e}"));
                    EmotionScores::one_hot(EmotionLabel::Neutral)
                }
            },
            None => EmotionScores::one_hot(EmotionLabel::Neutral),
        };
        let spec = emotion_to_band(&scores);
        self.emitter.emit(
            SessionEventKind::Emotion,
            json!({
                "scores": scores,
                "dominant": scores.dominant(),
                "confidence": scores.confidence(),
                "band": spec.band,
                "freq_hz": spec.freq,
                "character": spec.character,
            }),
        );
        self.session.emotion = Some(scores);
        let channels = contemplation_waveform(&spec, self.deps.contemplation_seconds, self.deps.out_rate)?;
        self.drive("contemplation".into(), None, channels, None).await
    }

    /// Speaks one utterance: TTS, decomposition, then the tank. Failures are
    /// reported and the utterance is skipped by the wave stage.
    async fn voice(&mut self, utterance: &mut Utterance) -> Result<(), EngineError> {
        let phase = self.session.phase();
        self.emitter.emit(SessionEventKind::Utterance, serde_json::to_value(&*utterance).expect("serializable"));
        let audio = match self.deps.tts.synthesize(&utterance.text, &utterance.persona).await {
            Ok(audio) => audio,
            Err(e) => {
                self.emitter.error(phase, Some(utterance.agent_id), format!("tts: {e}"));
                return Ok(());
            }
        };
        utterance.audio = Some(audio.clone());
        let out_rate = self.deps.out_rate;
        let waves = tokio::task::spawn_blocking(move || waves_for(&audio, out_rate))
            .await
            .map_err(|e| EngineError::Join(e.to_string()))?;
        match waves {
            Ok((channels, summary)) => {
                let label = format!("round{}-agent{}", utterance.round, utterance.agent_id);
                self.drive(label, Some(utterance.agent_id), channels, Some(summary)).await
            }
            Err(e) => {
                self.emitter.error(phase, Some(utterance.agent_id), format!("decomposition: {e}"));
                Ok(())
            }
        }
    }

    /// Rounds 1–4. Returns false if the dialogue had to be abandoned.
    async fn respond(&mut self, transcript: &mut Transcript) -> Result<bool, EngineError> {
        let dialogue = &self.deps.dialogue;
        let emitter = &mut self.emitter;
        let one = dialogue.round1_partial(&transcript.confession, &mut |e| emitter.stream(e)).await?;
        transcript.round1 = one.utterances;
        transcript.round1_failures = one.failures;
        if transcript.round1.is_empty() {
            self.emitter.error(Phase::Response(1), None, "no agent could reflect; moving to release");
            return Ok(false);
        }
        for i in 0..transcript.round1.len() {
            let mut u = transcript.round1[i].clone();
            self.voice(&mut u).await?;
            transcript.round1[i] = u;
        }
        self.advance(RitualEvent::RoundComplete(1), json!({}))?;

        for repeat in 0..dialogue.options().rounds_2_3_repeats {
            let emitter = &mut self.emitter;
            let outcome = dialogue.round2(transcript, &mut |e| emitter.stream(e)).await?;
            let winner = outcome.winner;
            let detail = json!({"selection": outcome});
            transcript.selections.push(outcome);
            if repeat == 0 {
                self.advance(RitualEvent::RoundComplete(2), detail)?;
            }
            let emitter = &mut self.emitter;
            let mut response = dialogue.round3(transcript, winner, &mut |e| emitter.stream(e)).await?;
            self.voice(&mut response).await?;
            transcript.responses.push(response);
        }
        self.advance(RitualEvent::RoundComplete(3), json!({}))?;

        let emitter = &mut self.emitter;
        let mut summary = dialogue.round4(transcript, &mut |e| emitter.stream(e)).await?;
        self.voice(&mut summary).await?;
        transcript.summary = Some(summary);
        self.advance(RitualEvent::RoundComplete(4), json!({}))?;
        Ok(true)
    }
}

fn waves_for(audio: &AudioBuffer, out_rate: u32) -> Result<(Vec<ChannelWaveform>, WaveSetSummary), ww_core::Error> {
    let set = decompose_speech(audio)?;
    let channels = synthesize_waveset(&set, out_rate)?;
    Ok((channels, set.summary()))
}

/// Coarse grayscale thumbnail (at most 64 columns) for live display.
fn preview(frame: &Frame, nx: usize, ny: usize) -> (usize, usize, Vec<u8>) {
    let w = nx.min(64).max(1);
    let h = ((ny * w) as f64 / nx as f64).round().max(1.0) as usize;
    let span = frame.max - frame.min;
    let mut out = Vec::with_capacity(w * h);
    for py in 0..h {
        let (y0, y1) = (py * ny / h, ((py + 1) * ny / h).max(py * ny / h + 1));
        for px in 0..w {
            let (x0, x1) = (px * nx / w, ((px + 1) * nx / w).max(px * nx / w + 1));
            let mut sum = 0.0f64;
            for y in y0..y1 {
                for x in x0..x1 {
                    sum += frame.data[y * nx + x] as f64;
                }
            }
            let mean = sum / ((y1 - y0) * (x1 - x0)) as f64;
            let v = if span > 0.0 { (mean - frame.min as f64) / span as f64 * 255.0 } else { 128.0 };
            out.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    (w, h, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preview_shape_and_range() {
        let nx = 512;
        let ny = 86;
        let data: Vec<f32> = (0..nx * ny).map(|i| (i % nx) as f32).collect();
        let (w, h, px) = preview(&Frame::new(0.0, data), nx, ny);
        assert_eq!((w, h), (64, 11));
        assert_eq!(px.len(), w * h);
        assert!(px[0] < 5 && px[63] > 250);
        let (_, _, flat) = preview(&Frame::new(0.0, vec![0.0; 12]), 4, 3);
        assert!(flat.iter().all(|&v| v == 128));
    }

    #[test]
    fn timeline_pads_to_longest() {
        let mut t = Timeline::new(100);
        t.append(&[ChannelWaveform { channel: 2, samples: vec![1.0; 10], sample_rate: 100 }]);
        t.append_silence(0.05);
        assert!(t.channels.iter().all(|c| c.len() == 15));
        assert_eq!(t.channels[1][9], 1.0);
        assert_eq!(t.channels[0][9], 0.0);
    }
}
