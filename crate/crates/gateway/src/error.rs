use thiserror::Error;
use ww_engine::{EngineError, ProviderError};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("config: {0}")]
    Config(String),

    #[error("asr unavailable: {0}")]
    AsrUnavailable(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error(transparent)]
    Engine(#[from] EngineError),

    #[error(transparent)]
    Core(#[from] ww_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<ProviderError> for GatewayError {
    fn from(e: ProviderError) -> Self {
        GatewayError::Engine(e.into())
    }
}
