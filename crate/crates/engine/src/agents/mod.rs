//! The six-agent response protocol.
//!
//! Round 1: every agent reflects on the confession, concurrently.
//! Round 2: every agent votes for a peer to comment.
//! Round 3: the winner responds.
//! Round 4: a dedicated summarizer reconciles everything said.

mod dialogue;
mod http;
mod mock;
mod multiplex;
mod provider;

use serde::{Deserialize, Serialize};
use ww_core::AudioBuffer;

pub use dialogue::{
    selection_notice, tally_votes, AgentFailure, Dialogue, DialogueOptions, RoundOne, Transcript, VoteOutcome, VoteRecord,
};
pub use http::{HttpChatProvider, HttpStyle};
pub use mock::{MockChatProvider, ScriptedChatProvider, ScriptedReply};
pub use multiplex::{multiplex, EventSource, Multiplex};
pub use provider::{ChatChunk, ChatMessage, ChatProvider, ChatRequest, ChunkStream, ProviderRegistry, Purpose};

pub const AGENT_COUNT: u8 = 6;
pub const SUMMARIZER_ID: u8 = 6;
pub const MAX_UTTERANCE_CHARS: usize = 150;
/// Text of the utterance substituted after a double provider failure.
pub const FALLBACK_TEXT: &str = "…";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub agent_id: u8,
    pub provider_name: String,
    #[serde(default)]
    pub model_hint: String,
    pub system_prompt: String,
}

impl AgentConfig {
    /// Six mock-backed agents plus the summarizer.
    pub fn default_roster(provider_name: &str) -> Vec<AgentConfig> {
        const VOICES: [&str; 6] = [
            "a tide-pool that remembers every footstep",
            "a cautious well keeper",
            "a river that laughs at obstacles",
            "a still lake at dawn",
            "a storm gathering offshore",
            "rain on a tin roof",
        ];
        let mut roster: Vec<AgentConfig> = VOICES
            .iter()
            .enumerate()
            .map(|(i, voice)| AgentConfig {
                agent_id: i as u8,
                provider_name: provider_name.to_string(),
                model_hint: String::new(),
                system_prompt: format!(
                    "You are agent {i}, one of six voices answering a confession spoken to water. \
                     Speak as {voice}. Answer in at most {MAX_UTTERANCE_CHARS} characters."
                ),
            })
            .collect();
        roster.push(AgentConfig {
            agent_id: SUMMARIZER_ID,
            provider_name: provider_name.to_string(),
            model_hint: String::new(),
            system_prompt: format!(
                "You reconcile six voices that answered a confession into one closing statement \
                 of at most {MAX_UTTERANCE_CHARS} characters."
            ),
        });
        roster
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeRegister {
    Young,
    Adult,
    Elder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenderRegister {
    Feminine,
    Masculine,
    Neutral,
}

/// Voice an agent picks for one utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonaDescriptor {
    pub voice_id: String,
    pub age_register: AgeRegister,
    pub gender_register: GenderRegister,
    pub tone: String,
}

impl PersonaDescriptor {
    pub fn neutral() -> Self {
        Self {
            voice_id: "neutral".into(),
            age_register: AgeRegister::Adult,
            gender_register: GenderRegister::Neutral,
            tone: "neutral".into(),
        }
    }

    /// Parses and validates a persona from provider JSON.
    pub fn from_json(value: &serde_json::Value) -> Result<Self, String> {
        let persona: PersonaDescriptor = serde_json::from_value(value.clone()).map_err(|e| e.to_string())?;
        if persona.voice_id.trim().is_empty() {
            return Err("voice_id is empty".into());
        }
        Ok(persona)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    /// 0–5 for the dialogue agents, 6 for the summarizer.
    pub agent_id: u8,
    pub round: u8,
    pub text: String,
    pub persona: PersonaDescriptor,
    #[serde(skip)]
    pub audio: Option<AudioBuffer>,
}

impl Utterance {
    pub fn new(agent_id: u8, round: u8, text: impl Into<String>, persona: PersonaDescriptor) -> Self {
        Self { agent_id, round, text: clip_text(&text.into()), persona, audio: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamEventKind {
    Token,
    UtteranceDone,
    RoundDone,
    Error,
}

/// One item of the multiplexed dialogue stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamEvent {
    pub kind: StreamEventKind,
    /// `None` for round-level events.
    pub agent_id: Option<u8>,
    pub round: u8,
    pub payload: String,
}

impl StreamEvent {
    pub fn token(agent_id: u8, round: u8, text: impl Into<String>) -> Self {
        Self { kind: StreamEventKind::Token, agent_id: Some(agent_id), round, payload: text.into() }
    }

    pub fn error(agent_id: Option<u8>, round: u8, message: impl Into<String>) -> Self {
        Self { kind: StreamEventKind::Error, agent_id, round, payload: message.into() }
    }
}

/// Enforces the 150-character limit, cutting at the last whitespace that
/// keeps the text within it (or hard at 150 when there is none).
pub fn clip_text(text: &str) -> String {
    let text = text.trim();
    if text.chars().count() <= MAX_UTTERANCE_CHARS {
        return text.to_string();
    }
    let cut = text.char_indices().nth(MAX_UTTERANCE_CHARS).map(|(i, _)| i).unwrap_or(text.len());
    let head = &text[..cut];
    if text[cut..].starts_with(char::is_whitespace) {
        return head.trim_end().to_string();
    }
    match head.rfind(char::is_whitespace) {
        Some(ws) if !head[..ws].trim_end().is_empty() => head[..ws].trim_end().to_string(),
        _ => head.to_string(),
    }
}
