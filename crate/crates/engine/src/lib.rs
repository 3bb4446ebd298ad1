//! Dialogue and session orchestration for the whispering-water engine.
//!
//! [`agents`] runs the four-round, six-agent response with streamed output;
//! [`ritual`] drives a session through confession, contemplation, response and
//! release, and seals the record at the end.

pub mod agents;
pub mod emotion;
pub mod error;
pub mod ritual;
pub mod tts;

pub use error::{EngineError, ProviderError};
