//! Core signal, emotion and water-surface machinery for the whispering-water engine.
//!
//! Everything in this crate is a pure function of its inputs (or owns its state
//! exclusively), so it runs the same natively and in the browser demo.

pub mod audio;
pub mod error;
pub mod sentiment;
pub mod signal;
pub mod watersim;
pub mod wav;

pub use audio::AudioBuffer;
pub use error::{Error, Result};
