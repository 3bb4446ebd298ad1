use thiserror::Error;

/// Failure of an external or mock provider call.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProviderError {
    #[error("provider {provider}: {message}")]
    Failed { provider: String, message: String },

    #[error("provider {provider}: malformed response: {message}")]
    Malformed { provider: String, message: String },

    #[error("unknown provider {0:?}")]
    Unknown(String),

    #[error("missing environment variable {0}")]
    MissingEnv(String),
}

impl ProviderError {
    pub fn failed(provider: impl Into<String>, message: impl std::fmt::Display) -> Self {
        ProviderError::Failed { provider: provider.into(), message: message.to_string() }
    }

    pub fn malformed(provider: impl Into<String>, message: impl std::fmt::Display) -> Self {
        ProviderError::Malformed { provider: provider.into(), message: message.to_string() }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Provider(#[from] ProviderError),

    #[error(transparent)]
    Core(#[from] ww_core::Error),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("round {round} failed: no agent produced an utterance")]
    RoundFailed { round: u8 },

    #[error("protocol violation: {event} is not legal in phase {phase}")]
    ProtocolViolation { phase: String, event: String },

    #[error("seal failed: {0}")]
    SealFailed(String),

    #[error("record authentication failed")]
    Authentication,

    #[error("malformed record: {0}")]
    MalformedRecord(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("task failed: {0}")]
    Join(String),
}
