use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use futures::channel::mpsc;
use futures::StreamExt;
use serde::{Deserialize, Serialize};

use super::multiplex::{multiplex, EventSource};
use super::provider::{ChatChunk, ChatMessage, ChatProvider, ChatRequest, ProviderRegistry, Purpose};
use super::{
    clip_text, AgentConfig, PersonaDescriptor, StreamEvent, StreamEventKind, Utterance, AGENT_COUNT, FALLBACK_TEXT,
    MAX_UTTERANCE_CHARS, SUMMARIZER_ID,
};
use crate::error::{EngineError, ProviderError};

type Tx = mpsc::UnboundedSender<Result<StreamEvent, ProviderError>>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DialogueOptions {
    /// How many vote/respond cycles run before the summary.
    pub rounds_2_3_repeats: u32,
    /// Upper bound on one provider call, streaming included.
    pub turn_timeout: Duration,
}

impl Default for DialogueOptions {
    fn default() -> Self {
        Self { rounds_2_3_repeats: 1, turn_timeout: Duration::from_secs(60) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentFailure {
    pub agent_id: u8,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOne {
    /// Successful reflections, ordered by agent id.
    pub utterances: Vec<Utterance>,
    pub failures: Vec<AgentFailure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub voter: u8,
    /// `None` when both attempts were invalid and the vote was discarded.
    pub vote: Option<u8>,
    pub attempts: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteOutcome {
    pub winner: u8,
    pub votes: Vec<VoteRecord>,
    /// True when no valid vote was cast and agent 0 won by default.
    pub defaulted: bool,
}

/// Everything said in one session, in protocol order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub confession: String,
    pub round1: Vec<Utterance>,
    pub round1_failures: Vec<AgentFailure>,
    pub selections: Vec<VoteOutcome>,
    pub responses: Vec<Utterance>,
    pub summary: Option<Utterance>,
}

impl Transcript {
    pub fn new(confession: impl Into<String>) -> Self {
        Self {
            confession: confession.into(),
            round1: Vec::new(),
            round1_failures: Vec::new(),
            selections: Vec::new(),
            responses: Vec::new(),
            summary: None,
        }
    }

    pub fn utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.round1.iter().chain(&self.responses).chain(&self.summary)
    }

    pub fn utterances_mut(&mut self) -> impl Iterator<Item = &mut Utterance> {
        self.round1.iter_mut().chain(&mut self.responses).chain(&mut self.summary)
    }

    pub fn count_round(&self, round: u8) -> usize {
        self.utterances().filter(|u| u.round == round).count()
    }

    /// The conversation so far as chat messages: the confession, then each
    /// utterance and selection notice in the order they happened.
    fn context(&self) -> Vec<ChatMessage> {
        let mut messages = vec![ChatMessage::user(format!("confession: {}", self.confession))];
        for u in &self.round1 {
            messages.push(utterance_message(u));
        }
        for (i, selection) in self.selections.iter().enumerate() {
            messages.push(ChatMessage::user(selection_notice(selection.winner)));
            if let Some(response) = self.responses.get(i) {
                messages.push(utterance_message(response));
            }
        }
        messages
    }
}

fn utterance_message(u: &Utterance) -> ChatMessage {
    ChatMessage::user(format!("agent{} (round {}): {}", u.agent_id, u.round, u.text))
}

pub fn selection_notice(winner: u8) -> String {
    format!("selection: agent{winner} was chosen to respond")
}

/// Plurality over valid votes; ties go to the lowest id; no valid vote
/// defaults to agent 0. Returns `(winner, defaulted)`.
pub fn tally_votes(votes: &[Option<u8>]) -> (u8, bool) {
    let mut counts = [0usize; AGENT_COUNT as usize];
    for v in votes.iter().flatten() {
        if let Some(c) = counts.get_mut(*v as usize) {
            *c += 1;
        }
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    if best == 0 {
        return (0, true);
    }
    (counts.iter().position(|&c| c == best).unwrap() as u8, false)
}

/// Extracts `{"vote": n}` from a reply; anything else, a self-vote or an
/// out-of-range id is invalid.
fn parse_vote(text: &str, voter: u8) -> Option<u8> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    let value: serde_json::Value = serde_json::from_str(text.get(start..=end)?).ok()?;
    let vote = value.get("vote")?.as_u64()?;
    (vote < AGENT_COUNT as u64 && vote != voter as u64).then_some(vote as u8)
}

/// Orchestrates the four rounds for six agents and the summarizer.
#[derive(Debug, Clone)]
pub struct Dialogue {
    agents: Vec<AgentConfig>,
    summarizer: AgentConfig,
    registry: ProviderRegistry,
    options: DialogueOptions,
}

impl Dialogue {
    /// Takes the six dialogue agents (ids 0–5) and the summarizer (id 6) in
    /// any order.
    pub fn new(configs: Vec<AgentConfig>, registry: ProviderRegistry, options: DialogueOptions) -> Result<Self, EngineError> {
        let mut agents = Vec::new();
        let mut summarizer = None;
        for config in configs {
            if !registry.contains(&config.provider_name) {
                return Err(EngineError::InvalidConfig(format!(
                    "agent {} uses unknown provider {:?}",
                    config.agent_id, config.provider_name
                )));
            }
            match config.agent_id {
                SUMMARIZER_ID if summarizer.is_none() => summarizer = Some(config),
                id if id < AGENT_COUNT && agents.iter().all(|a: &AgentConfig| a.agent_id != id) => agents.push(config),
                id => return Err(EngineError::InvalidConfig(format!("duplicate or out-of-range agent id {id}"))),
            }
        }
        if agents.len() != AGENT_COUNT as usize {
            return Err(EngineError::InvalidConfig(format!("expected 6 dialogue agents, got {}", agents.len())));
        }
        let summarizer = summarizer.ok_or_else(|| EngineError::InvalidConfig("no summarizer (agent 6) configured".into()))?;
        if options.rounds_2_3_repeats == 0 {
            return Err(EngineError::InvalidConfig("rounds_2_3_repeats must be at least 1".into()));
        }
        agents.sort_by_key(|a| a.agent_id);
        Ok(Self { agents, summarizer, registry, options })
    }

    /// Six agents and the summarizer all backed by one seeded mock, which is
    /// returned too so its received prompts can be inspected.
    pub fn seeded_mock(seed: u64, options: DialogueOptions) -> (Self, super::MockChatProvider) {
        let mock = super::MockChatProvider::new(seed);
        let registry = ProviderRegistry::new().with("mock", Arc::new(mock.clone()));
        let dialogue = Self::new(AgentConfig::default_roster("mock"), registry, options).expect("default roster is valid");
        (dialogue, mock)
    }

    pub fn options(&self) -> &DialogueOptions {
        &self.options
    }

    fn provider(&self, config: &AgentConfig) -> Arc<dyn ChatProvider> {
        self.registry.get(&config.provider_name).expect("checked at construction")
    }

    fn request(&self, config: &AgentConfig, round: u8, purpose: Purpose, messages: Vec<ChatMessage>) -> ChatRequest {
        let mut system = config.system_prompt.clone();
        if !config.model_hint.is_empty() {
            system = format!("[model: {}] {system}", config.model_hint);
        }
        ChatRequest { system, messages, max_chars: MAX_UTTERANCE_CHARS, agent_id: config.agent_id, round, purpose }
    }

    fn turn(&self, config: &AgentConfig, request: ChatRequest, attempts: u8, announce: bool) -> Turn {
        Turn { provider: self.provider(config), request, attempts, announce, timeout: self.options.turn_timeout }
    }

    /// Every agent reflects on the confession, concurrently. Fails with
    /// `RoundFailed` when no agent succeeds.
    pub async fn round1(&self, confession: &str, sink: &mut (dyn FnMut(StreamEvent) + Send)) -> Result<RoundOne, EngineError> {
        let round = self.round1_partial(confession, sink).await?;
        if round.utterances.is_empty() {
            return Err(EngineError::RoundFailed { round: 1 });
        }
        Ok(round)
    }

    /// Round 1 without the success requirement, so callers can keep the
    /// failure list of a round that produced nothing.
    pub async fn round1_partial(&self, confession: &str, sink: &mut (dyn FnMut(StreamEvent) + Send)) -> Result<RoundOne, EngineError> {
        if confession.trim().is_empty() {
            return Err(EngineError::InvalidInput("confession text is empty".into()));
        }
        let jobs = self.agents.iter().map(|a| {
            let messages = vec![
                ChatMessage::user(format!("confession: {confession}")),
                ChatMessage::user("Reflect on this confession in your own voice."),
            ];
            let turn = self.turn(a, self.request(a, 1, Purpose::Reflect, messages), 1, true);
            (a.agent_id, 1, move |tx: Tx| turn.speak(tx))
        });
        let results = fan_out(jobs.collect(), sink).await?;
        let mut round = RoundOne { utterances: Vec::new(), failures: Vec::new() };
        for (a, result) in self.agents.iter().zip(results) {
            match result {
                Ok((text, persona)) => round.utterances.push(Utterance::new(a.agent_id, 1, text, persona)),
                Err(e) => round.failures.push(AgentFailure { agent_id: a.agent_id, message: e.to_string() }),
            }
        }
        sink(round_done(1, serde_json::json!({"utterances": round.utterances.len(), "failures": round.failures.len()})));
        Ok(round)
    }

    /// Every agent votes for a peer, concurrently; self-votes and malformed
    /// votes get one re-ask.
    pub async fn round2(&self, transcript: &Transcript, sink: &mut (dyn FnMut(StreamEvent) + Send)) -> Result<VoteOutcome, EngineError> {
        let context = transcript.context();
        let jobs = self.agents.iter().map(|a| {
            let mut messages = context.clone();
            messages.push(ChatMessage::user(format!(
                "You are agent{}. Choose one peer (0-5, not yourself) to comment next. Reply only with JSON {{\"vote\": <agent_id>}}.",
                a.agent_id
            )));
            let turn = self.turn(a, self.request(a, 2, Purpose::Vote, messages), 1, false);
            (a.agent_id, 2, move |tx: Tx| turn.vote(tx))
        });
        let votes = fan_out(jobs.collect(), sink).await?;
        let (winner, defaulted) = tally_votes(&votes.iter().map(|v| v.vote).collect::<Vec<_>>());
        let outcome = VoteOutcome { winner, votes, defaulted };
        sink(round_done(2, serde_json::to_value(&outcome).expect("serializable")));
        Ok(outcome)
    }

    /// The chosen agent responds to everything said so far; one retry, then
    /// a neutral fallback.
    pub async fn round3(&self, transcript: &Transcript, winner: u8, sink: &mut (dyn FnMut(StreamEvent) + Send)) -> Result<Utterance, EngineError> {
        let config = self
            .agents
            .iter()
            .find(|a| a.agent_id == winner)
            .ok_or_else(|| EngineError::InvalidInput(format!("agent {winner} cannot respond")))?;
        let mut messages = transcript.context();
        if transcript.selections.len() == transcript.responses.len() {
            messages.push(ChatMessage::user(selection_notice(winner)));
        }
        messages.push(ChatMessage::user("You were chosen. Comment on the emerging discourse."));
        let turn = self.turn(config, self.request(config, 3, Purpose::Respond, messages), 2, true);
        let utterance = self.single(turn, 3, sink).await?;
        sink(round_done(3, serde_json::json!({"agent_id": utterance.agent_id})));
        Ok(utterance)
    }

    /// The summarizer reconciles the whole transcript.
    pub async fn round4(&self, transcript: &Transcript, sink: &mut (dyn FnMut(StreamEvent) + Send)) -> Result<Utterance, EngineError> {
        let mut messages = transcript.context();
        messages.push(ChatMessage::user("Synthesize all of the above into one concluding statement."));
        let config = &self.summarizer;
        let turn = self.turn(config, self.request(config, 4, Purpose::Summarize, messages), 2, true);
        let utterance = self.single(turn, 4, sink).await?;
        sink(round_done(4, serde_json::json!({"agent_id": utterance.agent_id})));
        Ok(utterance)
    }

    async fn single(&self, turn: Turn, round: u8, sink: &mut (dyn FnMut(StreamEvent) + Send)) -> Result<Utterance, EngineError> {
        let agent = turn.request.agent_id;
        let mut results = fan_out(vec![(agent, round, move |tx: Tx| turn.speak(tx))], sink).await?;
        Ok(match results.pop().expect("one job") {
            Ok((text, persona)) => Utterance::new(agent, round, text, persona),
            Err(_) => {
                let fallback = Utterance::new(agent, round, FALLBACK_TEXT, PersonaDescriptor::neutral());
                sink(utterance_done(agent, round, &fallback.text));
                fallback
            }
        })
    }

    /// All four rounds back to back (rounds 2–3 repeated as configured).
    pub async fn run(&self, confession: &str, sink: &mut (dyn FnMut(StreamEvent) + Send)) -> Result<Transcript, EngineError> {
        let mut transcript = Transcript::new(confession);
        let one = self.round1(confession, sink).await?;
        transcript.round1 = one.utterances;
        transcript.round1_failures = one.failures;
        for _ in 0..self.options.rounds_2_3_repeats {
            let outcome = self.round2(&transcript, sink).await?;
            let winner = outcome.winner;
            transcript.selections.push(outcome);
            let response = self.round3(&transcript, winner, sink).await?;
            transcript.responses.push(response);
        }
        transcript.summary = Some(self.round4(&transcript, sink).await?);
        Ok(transcript)
    }
}

fn round_done(round: u8, payload: serde_json::Value) -> StreamEvent {
    StreamEvent { kind: StreamEventKind::RoundDone, agent_id: None, round, payload: payload.to_string() }
}

fn utterance_done(agent: u8, round: u8, text: &str) -> StreamEvent {
    StreamEvent { kind: StreamEventKind::UtteranceDone, agent_id: Some(agent), round, payload: text.to_string() }
}

/// Runs one job per agent on its own task and forwards their merged events
/// to `sink` as they arrive. Results come back in job order.
async fn fan_out<T, F, Fut>(jobs: Vec<(u8, u8, F)>, sink: &mut (dyn FnMut(StreamEvent) + Send)) -> Result<Vec<T>, EngineError>
where
    F: FnOnce(Tx) -> Fut,
    Fut: Future<Output = T> + Send + 'static,
    T: Send + 'static,
{
    let mut sources = Vec::with_capacity(jobs.len());
    let mut handles = Vec::with_capacity(jobs.len());
    for (agent, round, job) in jobs {
        let (tx, rx) = mpsc::unbounded();
        sources.push(EventSource::new(Some(agent), round, rx));
        handles.push(tokio::spawn(job(tx)));
    }
    let mut merged = multiplex(sources);
    while let Some(event) = merged.next().await {
        sink(event);
    }
    let mut out = Vec::with_capacity(handles.len());
    for h in handles {
        out.push(h.await.map_err(|e| EngineError::Join(e.to_string()))?);
    }
    Ok(out)
}

/// One agent's call, with its retry budget.
struct Turn {
    provider: Arc<dyn ChatProvider>,
    request: ChatRequest,
    attempts: u8,
    /// Emit tokens and `utterance_done` (false for votes).
    announce: bool,
    timeout: Duration,
}

impl Turn {
    fn agent(&self) -> u8 {
        self.request.agent_id
    }

    async fn stream_once(&self, request: ChatRequest, tx: Option<&Tx>) -> Result<(String, serde_json::Value), ProviderError> {
        let (agent, round) = (request.agent_id, request.round);
        let name = self.provider.name().to_string();
        let work = async {
            let mut stream = self.provider.chat(request).await?;
            let mut text = String::new();
            while let Some(chunk) = stream.next().await {
                match chunk? {
                    ChatChunk::Delta(delta) => {
                        if let Some(tx) = tx {
                            let _ = tx.unbounded_send(Ok(StreamEvent::token(agent, round, delta.clone())));
                        }
                        text.push_str(&delta);
                    }
                    ChatChunk::Done { persona } => return Ok((text, persona)),
                }
            }
            Err(ProviderError::malformed(&name, "stream ended without done"))
        };
        match tokio::time::timeout(self.timeout, work).await {
            Ok(result) => result,
            Err(_) => Err(ProviderError::failed(self.provider.name(), "timed out")),
        }
    }

    /// Streams the reply, retrying provider failures within budget, then
    /// settles the persona. The final failure is reported through `tx` so the
    /// multiplexer turns it into an error event.
    async fn speak(self, tx: Tx) -> Result<(String, PersonaDescriptor), ProviderError> {
        let (agent, round) = (self.agent(), self.request.round);
        let mut last = None;
        for attempt in 1..=self.attempts {
            match self.stream_once(self.request.clone(), Some(&tx)).await {
                Ok((text, persona)) => {
                    let persona = self.settle_persona(persona).await;
                    let text = clip_text(&text);
                    if self.announce {
                        let _ = tx.unbounded_send(Ok(utterance_done(agent, round, &text)));
                    }
                    return Ok((text, persona));
                }
                Err(e) if attempt < self.attempts => {
                    tracing::warn!(agent, round, attempt, error = %e, "provider call failed, retrying");
                    let _ = tx.unbounded_send(Ok(StreamEvent::error(Some(agent), round, e.to_string())));
                }
                Err(e) => last = Some(e),
            }
        }
        let e = last.expect("at least one attempt");
        let _ = tx.unbounded_send(Err(e.clone()));
        Err(e)
    }

    /// A valid persona is kept; otherwise the agent is asked once for just
    /// the persona, and after that the neutral default is used.
    async fn settle_persona(&self, value: serde_json::Value) -> PersonaDescriptor {
        if let Ok(p) = PersonaDescriptor::from_json(&value) {
            return p;
        }
        let mut request = self.request.clone();
        request.purpose = Purpose::Persona;
        request.messages.push(ChatMessage::user(
            "Describe the voice for your reply as JSON with keys voice_id, age_register (young|adult|elder), \
             gender_register (feminine|masculine|neutral) and tone.",
        ));
        if let Ok((text, value)) = self.stream_once(request, None).await {
            if let Ok(p) = PersonaDescriptor::from_json(&value) {
                return p;
            }
            if let Ok(p) = serde_json::from_str::<serde_json::Value>(text.trim())
                .map_err(|e| e.to_string())
                .and_then(|v| PersonaDescriptor::from_json(&v))
            {
                return p;
            }
        }
        tracing::warn!(agent = self.agent(), "no valid persona after re-request; using neutral");
        PersonaDescriptor::neutral()
    }

    async fn vote(self, _tx: Tx) -> VoteRecord {
        let voter = self.agent();
        let first = self.stream_once(self.request.clone(), None).await;
        if let Some(vote) = first.as_ref().ok().and_then(|(text, _)| parse_vote(text, voter)) {
            return VoteRecord { voter, vote: Some(vote), attempts: 1 };
        }
        let mut request = self.request.clone();
        let complaint = match &first {
            Ok((text, _)) => format!("Your reply {text:?} was not a valid vote."),
            Err(_) => "Your vote did not arrive.".to_string(),
        };
        request.messages.push(ChatMessage::user(format!(
            "{complaint} Name one peer other than agent{voter}, as JSON {{\"vote\": <agent_id>}}."
        )));
        let second = self.stream_once(request, None).await;
        let vote = second.ok().and_then(|(text, _)| parse_vote(&text, voter));
        VoteRecord { voter, vote, attempts: 2 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plurality_and_ties() {
        assert_eq!(tally_votes(&[1, 1, 2, 2, 2, 0].map(Some)), (2, false));
        assert_eq!(tally_votes(&[1, 1, 2, 2, 0, 0].map(Some)), (0, false));
        assert_eq!(tally_votes(&[Some(4), None, None, Some(3), Some(4), None]), (4, false));
        assert_eq!(tally_votes(&[None; 6]), (0, true));
        assert_eq!(tally_votes(&[]), (0, true));
    }

    #[test]
    fn vote_parsing() {
        assert_eq!(parse_vote(r#"{"vote": 3}"#, 0), Some(3));
        assert_eq!(parse_vote(r#"I pick {"vote":5} because"#, 0), Some(5));
        assert_eq!(parse_vote(r#"{"vote": 2}"#, 2), None);
        assert_eq!(parse_vote(r#"{"vote": 6}"#, 0), None);
        assert_eq!(parse_vote(r#"{"vote": -1}"#, 0), None);
        assert_eq!(parse_vote("agent 3", 0), None);
    }
}
