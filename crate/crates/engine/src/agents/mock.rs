use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use futures::StreamExt;
use ring::digest;

use super::provider::{ChatChunk, ChatProvider, ChatRequest, ChunkStream, Purpose};
use crate::error::ProviderError;

const VOICES: [&str; 8] = ["brook", "cistern", "delta", "estuary", "fjord", "glacier", "harbor", "inlet"];
const AGES: [&str; 3] = ["young", "adult", "elder"];
const GENDERS: [&str; 3] = ["feminine", "masculine", "neutral"];
const TONES: [&str; 6] = ["gentle", "wry", "solemn", "warm", "urgent", "distant"];

/// Seeded, fully deterministic chat provider. Replies depend only on the
/// seed, the agent id, the purpose and the request text, so a transcript is
/// byte-reproducible regardless of task scheduling.
#[derive(Debug, Clone)]
pub struct MockChatProvider {
    seed: u64,
    log: Arc<Mutex<Vec<ChatRequest>>>,
}

impl MockChatProvider {
    pub fn new(seed: u64) -> Self {
        Self { seed, log: Arc::default() }
    }

    /// Every request received so far, in arrival order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.log.lock().unwrap().clone()
    }

    fn digest(&self, request: &ChatRequest) -> [u8; 32] {
        let mut ctx = digest::Context::new(&digest::SHA256);
        ctx.update(&self.seed.to_le_bytes());
        ctx.update(&[request.agent_id, request.round, request.purpose as u8]);
        ctx.update(request.system.as_bytes());
        for m in &request.messages {
            ctx.update(m.role.as_bytes());
            ctx.update(&[0]);
            ctx.update(m.content.as_bytes());
            ctx.update(&[0]);
        }
        ctx.finish().as_ref().try_into().unwrap()
    }

    pub fn reply_for(&self, request: &ChatRequest) -> (String, serde_json::Value) {
        let d = self.digest(request);
        let tag: String = d[..4].iter().map(|b| format!("{b:02x}")).collect();
        let k = request.agent_id;
        let persona = serde_json::json!({
            "voice_id": VOICES[d[4] as usize % VOICES.len()],
            "age_register": AGES[d[5] as usize % AGES.len()],
            "gender_register": GENDERS[d[6] as usize % GENDERS.len()],
            "tone": TONES[d[7] as usize % TONES.len()],
        });
        let text = match request.purpose {
            Purpose::Reflect => format!("agent{k} reflects: {tag}"),
            Purpose::Vote => {
                // a peer, never self
                let offset = 1 + d[8] as usize % 5;
                format!("{{\"vote\": {}}}", (k as usize + offset) % 6)
            }
            Purpose::Respond => format!("agent{k} responds: {tag}"),
            Purpose::Summarize => format!("agent{k} reconciles: {tag}"),
            Purpose::Persona => persona.to_string(),
        };
        (text, persona)
    }
}

/// Splits text into word-ish tokens that concatenate back to the original.
pub(crate) fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        cur.push(c);
        if c.is_whitespace() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn chunk_stream(chunks: Vec<Result<ChatChunk, ProviderError>>) -> ChunkStream {
    futures::stream::iter(chunks)
        .then(|c| async move {
            tokio::task::yield_now().await;
            c
        })
        .boxed()
}

fn text_chunks(text: &str, persona: serde_json::Value) -> Vec<Result<ChatChunk, ProviderError>> {
    let mut chunks: Vec<_> = tokenize(text).into_iter().map(|t| Ok(ChatChunk::Delta(t))).collect();
    chunks.push(Ok(ChatChunk::Done { persona }));
    chunks
}

#[async_trait]
impl ChatProvider for MockChatProvider {
    fn name(&self) -> &str {
        "mock"
    }

    async fn chat(&self, request: ChatRequest) -> Result<ChunkStream, ProviderError> {
        let (text, persona) = self.reply_for(&request);
        self.log.lock().unwrap().push(request);
        Ok(chunk_stream(text_chunks(&text, persona)))
    }
}

/// One canned reply for fault injection.
#[derive(Debug, Clone)]
pub enum ScriptedReply {
    Text { text: String, persona: serde_json::Value },
    /// The call itself fails.
    Fail(String),
    /// Some tokens arrive, then the stream errors.
    FailMidStream { partial: String, message: String },
    /// Tokens arrive but the stream ends without a `done` chunk.
    Truncated(String),
}

impl ScriptedReply {
    pub fn text(text: impl Into<String>, persona: serde_json::Value) -> Self {
        ScriptedReply::Text { text: text.into(), persona }
    }
}

/// Plays queued replies per (agent, purpose) and defers to a seeded mock
/// once a queue is empty.
#[derive(Debug, Clone)]
pub struct ScriptedChatProvider {
    fallback: MockChatProvider,
    script: Arc<Mutex<HashMap<(u8, Purpose), VecDeque<ScriptedReply>>>>,
}

impl ScriptedChatProvider {
    pub fn new(fallback: MockChatProvider) -> Self {
        Self { fallback, script: Arc::default() }
    }

    pub fn push(&self, agent_id: u8, purpose: Purpose, reply: ScriptedReply) -> &Self {
        self.script.lock().unwrap().entry((agent_id, purpose)).or_default().push_back(reply);
        self
    }

    pub fn fallback(&self) -> &MockChatProvider {
        &self.fallback
    }
}

#[async_trait]
impl ChatProvider for ScriptedChatProvider {
    fn name(&self) -> &str {
        "scripted"
    }

    async fn chat(&self, request: ChatRequest) -> Result<ChunkStream, ProviderError> {
        let next = self.script.lock().unwrap().get_mut(&(request.agent_id, request.purpose)).and_then(VecDeque::pop_front);
        let Some(reply) = next else {
            return self.fallback.chat(request).await;
        };
        self.fallback.log.lock().unwrap().push(request);
        match reply {
            ScriptedReply::Text { text, persona } => Ok(chunk_stream(text_chunks(&text, persona))),
            ScriptedReply::Fail(message) => Err(ProviderError::failed("scripted", message)),
            ScriptedReply::FailMidStream { partial, message } => {
                let mut chunks: Vec<_> = tokenize(&partial).into_iter().map(|t| Ok(ChatChunk::Delta(t))).collect();
                chunks.push(Err(ProviderError::failed("scripted", message)));
                Ok(chunk_stream(chunks))
            }
            ScriptedReply::Truncated(partial) => {
                Ok(chunk_stream(tokenize(&partial).into_iter().map(|t| Ok(ChatChunk::Delta(t))).collect()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::ChatMessage;

    fn request(agent_id: u8, purpose: Purpose) -> ChatRequest {
        ChatRequest {
            system: "s".into(),
            messages: vec![ChatMessage::user("I broke my promise")],
            max_chars: 150,
            agent_id,
            round: 1,
            purpose,
        }
    }

    #[test]
    fn tokens_concatenate_back() {
        let text = "the  water\tkeeps what it is given ";
        assert_eq!(tokenize(text).concat(), text);
    }

    #[test]
    fn seeded_replies_are_stable() {
        let a = MockChatProvider::new(7);
        let b = MockChatProvider::new(7);
        let c = MockChatProvider::new(8);
        let r = request(3, Purpose::Reflect);
        assert_eq!(a.reply_for(&r), b.reply_for(&r));
        assert_ne!(a.reply_for(&r).0, c.reply_for(&r).0);
        assert!(a.reply_for(&r).0.starts_with("agent3 reflects: "));
    }

    #[test]
    fn mock_never_self_votes() {
        let mock = MockChatProvider::new(1);
        for seed_text in 0..50 {
            for k in 0..6u8 {
                let mut r = request(k, Purpose::Vote);
                r.messages[0].content = format!("confession {seed_text}");
                let (text, _) = mock.reply_for(&r);
                let v: serde_json::Value = serde_json::from_str(&text).unwrap();
                let vote = v["vote"].as_u64().unwrap();
                assert!(vote < 6 && vote != k as u64);
            }
        }
    }
}
