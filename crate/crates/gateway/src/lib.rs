//! Command line and HTTP service around the session engine: configuration,
//! transcription, artifact export and event streaming.

pub mod asr;
pub mod cli;
pub mod config;
pub mod error;
pub mod runner;
pub mod server;

pub use config::EngineConfig;
pub use error::GatewayError;
