//! Speech-to-wave decomposition: short-time spectra, pitch, the log-spaced
//! harmonic ladder, Bark warping and remapping into the three subwoofer bands.

mod bands;
mod decompose;
mod envelope;
mod pitch;
mod scale;
mod stft;
mod synth;

pub use bands::{assign_bands, Band, BandAssignment, CHANNELS_BY_RANK};
pub use decompose::{decompose_speech, decompose_speech_with, DecomposeOptions, WaveComponent, WaveSet, WaveSetSummary};
pub use envelope::{extract_envelope, interpolate_bin_magnitudes, smooth_envelope, ENVELOPE_TIME_CONSTANT_S};
pub use pitch::{estimate_f0, estimate_f0_with, PitchConfig, F0_MAX_HZ, F0_MIN_HZ};
pub use scale::{bark, harmonic_ladder, LADDER_LEN};
pub use stft::{istft, periodic_hann, reconstructable_range, stft, SpectralFrames};
pub use synth::{synthesize_channel, synthesize_waveset, ChannelWaveform, DEFAULT_OUT_RATE};

/// Analysis rate; with a 512-point transform it yields 257 bins over 0–8000 Hz.
pub const ANALYSIS_RATE: u32 = 16_000;
pub const FFT_SIZE: usize = 512;
pub const HOP: usize = 256;
pub const NUM_BINS: usize = FFT_SIZE / 2 + 1;
