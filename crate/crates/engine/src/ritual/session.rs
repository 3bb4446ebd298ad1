use serde::{Deserialize, Serialize};
use zeroize::Zeroize;

use crate::agents::Transcript;
use crate::error::EngineError;
use ww_core::sentiment::EmotionScores;
use ww_core::AudioBuffer;

/// Longest confession kept; longer recordings are truncated.
pub const MAX_CONFESSION_SECONDS: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", content = "round", rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Confession,
    Contemplation,
    Response(u8),
    Release,
    Complete,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Phase::Idle => f.write_str("idle"),
            Phase::Confession => f.write_str("confession"),
            Phase::Contemplation => f.write_str("contemplation"),
            Phase::Response(n) => write!(f, "response({n})"),
            Phase::Release => f.write_str("release"),
            Phase::Complete => f.write_str("complete"),
        }
    }
}

/// What the participant said. `audio` is absent for typed confessions.
#[derive(Debug, Clone, PartialEq)]
pub struct Confession {
    pub text: String,
    pub audio: Option<AudioBuffer>,
}

impl Confession {
    pub fn text(text: impl Into<String>) -> Self {
        Self { text: text.into(), audio: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RitualEvent {
    Begin,
    RecordingComplete(Confession),
    AnalysisComplete,
    RoundComplete(u8),
    /// The dialogue could not continue; go straight to release.
    ResponseAborted,
    StillnessReached,
    SealComplete,
    /// Sealing was impossible; drop everything.
    Discard,
}

impl RitualEvent {
    fn name(&self) -> String {
        match self {
            RitualEvent::Begin => "begin".into(),
            RitualEvent::RecordingComplete(_) => "recording-complete".into(),
            RitualEvent::AnalysisComplete => "analysis-complete".into(),
            RitualEvent::RoundComplete(n) => format!("round-complete({n})"),
            RitualEvent::ResponseAborted => "response-aborted".into(),
            RitualEvent::StillnessReached => "stillness-reached".into(),
            RitualEvent::SealComplete => "seal-complete".into(),
            RitualEvent::Discard => "discard".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RitualSession {
    pub session_id: String,
    phase: Phase,
    history: Vec<Phase>,
    pub confession: Option<Confession>,
    pub emotion: Option<EmotionScores>,
    pub transcript: Option<Transcript>,
    still: bool,
    sealed: bool,
    discarded: bool,
}

impl Default for RitualSession {
    fn default() -> Self {
        Self::new()
    }
}

impl RitualSession {
    /// A fresh session with an unguessable id.
    pub fn new() -> Self {
        Self::with_id(uuid::Uuid::new_v4().simple().to_string())
    }

    pub fn with_id(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            phase: Phase::Idle,
            history: vec![Phase::Idle],
            confession: None,
            emotion: None,
            transcript: None,
            still: false,
            sealed: false,
            discarded: false,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Every phase entered so far, starting with `Idle`.
    pub fn history(&self) -> &[Phase] {
        &self.history
    }

    pub fn is_sealed(&self) -> bool {
        self.sealed
    }

    pub fn is_discarded(&self) -> bool {
        self.discarded
    }

    pub fn stillness_reached(&self) -> bool {
        self.still
    }

    /// Applies one event. An event that is illegal in the current phase
    /// leaves the session untouched.
    pub fn advance(&mut self, event: RitualEvent) -> Result<Phase, EngineError> {
        let next = match (self.phase, &event) {
            (Phase::Idle, RitualEvent::Begin) => Phase::Confession,
            (Phase::Confession, RitualEvent::RecordingComplete(c)) if !c.text.trim().is_empty() => Phase::Contemplation,
            (Phase::Contemplation, RitualEvent::AnalysisComplete) => Phase::Response(1),
            (Phase::Response(n), RitualEvent::RoundComplete(m)) if n == *m => {
                if n < 4 {
                    Phase::Response(n + 1)
                } else {
                    Phase::Release
                }
            }
            (Phase::Response(_), RitualEvent::ResponseAborted) => Phase::Release,
            (Phase::Release, RitualEvent::StillnessReached) if !self.still => Phase::Release,
            (Phase::Release, RitualEvent::SealComplete) if self.still => Phase::Complete,
            (Phase::Release, RitualEvent::Discard) => Phase::Complete,
            _ => {
                return Err(EngineError::ProtocolViolation { phase: self.phase.to_string(), event: event.name() });
            }
        };
        match event {
            RitualEvent::RecordingComplete(mut confession) => {
                if let Some(audio) = confession.audio.as_mut() {
                    audio.truncate_seconds(MAX_CONFESSION_SECONDS);
                }
                self.confession = Some(confession);
            }
            RitualEvent::StillnessReached => self.still = true,
            RitualEvent::SealComplete => self.sealed = true,
            RitualEvent::Discard => {
                self.redact();
                self.discarded = true;
            }
            _ => {}
        }
        if next != self.phase {
            self.phase = next;
            self.history.push(next);
        }
        Ok(next)
    }

    /// Overwrites and drops the confession, emotion and transcript.
    pub(crate) fn redact(&mut self) {
        if let Some(mut c) = self.confession.take() {
            c.text.zeroize();
            if let Some(audio) = c.audio.take() {
                audio.into_samples().zeroize();
            }
        }
        self.emotion = None;
        if let Some(mut t) = self.transcript.take() {
            t.confession.zeroize();
            for u in t.utterances_mut() {
                u.text.zeroize();
                u.persona.tone.zeroize();
                u.persona.voice_id.zeroize();
                if let Some(audio) = u.audio.take() {
                    audio.into_samples().zeroize();
                }
            }
            for f in &mut t.round1_failures {
                f.message.zeroize();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at_response(n: u8) -> RitualSession {
        let mut s = RitualSession::new();
        s.advance(RitualEvent::Begin).unwrap();
        s.advance(RitualEvent::RecordingComplete(Confession::text("I lied"))).unwrap();
        s.advance(RitualEvent::AnalysisComplete).unwrap();
        for k in 1..n {
            s.advance(RitualEvent::RoundComplete(k)).unwrap();
        }
        s
    }

    #[test]
    fn full_chain() {
        let mut s = at_response(4);
        assert_eq!(s.advance(RitualEvent::RoundComplete(4)).unwrap(), Phase::Release);
        assert!(s.advance(RitualEvent::SealComplete).is_err(), "sealing needs stillness first");
        s.advance(RitualEvent::StillnessReached).unwrap();
        assert_eq!(s.advance(RitualEvent::SealComplete).unwrap(), Phase::Complete);
        assert!(s.is_sealed());
        assert_eq!(
            s.history(),
            [
                Phase::Idle,
                Phase::Confession,
                Phase::Contemplation,
                Phase::Response(1),
                Phase::Response(2),
                Phase::Response(3),
                Phase::Response(4),
                Phase::Release,
                Phase::Complete
            ]
        );
    }

    #[test]
    fn illegal_events_leave_state_unchanged() {
        let mut s = at_response(2);
        let before = s.clone();
        for event in [
            RitualEvent::Begin,
            RitualEvent::RoundComplete(3),
            RitualEvent::RoundComplete(1),
            RitualEvent::AnalysisComplete,
            RitualEvent::StillnessReached,
            RitualEvent::SealComplete,
            RitualEvent::Discard,
        ] {
            match s.advance(event) {
                Err(EngineError::ProtocolViolation { phase, .. }) => assert_eq!(phase, "response(2)"),
                other => panic!("{other:?}"),
            }
            assert_eq!(s, before);
        }
    }

    #[test]
    fn long_confession_truncated_to_cap() {
        let mut s = RitualSession::new();
        s.advance(RitualEvent::Begin).unwrap();
        let audio = AudioBuffer::silence(17.0, 16000);
        s.advance(RitualEvent::RecordingComplete(Confession { text: "x".into(), audio: Some(audio) })).unwrap();
        assert_eq!(s.phase(), Phase::Contemplation);
        let kept = s.confession.as_ref().unwrap().audio.as_ref().unwrap();
        assert_eq!(kept.len(), 15 * 16000);
    }

    #[test]
    fn empty_confession_rejected() {
        let mut s = RitualSession::new();
        s.advance(RitualEvent::Begin).unwrap();
        assert!(s.advance(RitualEvent::RecordingComplete(Confession::text("  "))).is_err());
        assert_eq!(s.phase(), Phase::Confession);
    }

    #[test]
    fn abort_skips_to_release() {
        let mut s = at_response(1);
        assert_eq!(s.advance(RitualEvent::ResponseAborted).unwrap(), Phase::Release);
        assert_eq!(s.advance(RitualEvent::Discard).unwrap(), Phase::Complete);
        assert!(s.is_discarded() && !s.is_sealed());
        assert!(s.confession.is_none());
    }

    #[test]
    fn phase_serializes_with_round() {
        assert_eq!(serde_json::to_value(Phase::Response(3)).unwrap(), serde_json::json!({"phase": "response", "round": 3}));
        assert_eq!(serde_json::to_value(Phase::Release).unwrap(), serde_json::json!({"phase": "release"}));
        assert_eq!(Phase::Response(2).to_string(), "response(2)");
    }

    #[test]
    fn ids_are_unique() {
        assert_ne!(RitualSession::new().session_id, RitualSession::new().session_id);
        assert_eq!(RitualSession::new().session_id.len(), 32);
    }
}
