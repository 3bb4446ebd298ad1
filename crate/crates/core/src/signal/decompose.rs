use serde::{Deserialize, Serialize};

use super::bands::{assign_bands, Band};
use super::envelope::extract_envelope;
use super::pitch::{estimate_f0_with, PitchConfig};
use super::scale::harmonic_ladder;
use super::stft::{periodic_hann, stft};
use super::{ANALYSIS_RATE, FFT_SIZE, HOP};
use crate::audio::{AudioBuffer, ResampleQuality};
use crate::error::{Error, Result};

/// One carrier: a ladder partial remapped into a subwoofer band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveComponent {
    pub index: usize,
    pub source_freq: f64,
    pub bark: f64,
    pub channel: u8,
    pub band: Band,
    pub target_freq: f64,
    /// Amplitude track, in units of sinusoid amplitude.
    pub envelope: Vec<f64>,
    pub envelope_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveSet {
    pub components: Vec<WaveComponent>,
    pub f0: f64,
    pub duration_seconds: f64,
}

impl WaveSet {
    pub fn component_for_channel(&self, channel: u8) -> Option<&WaveComponent> {
        self.components.iter().find(|c| c.channel == channel)
    }

    pub fn summary(&self) -> WaveSetSummary {
        WaveSetSummary {
            f0_hz: self.f0,
            duration_seconds: self.duration_seconds,
            components: self
                .components
                .iter()
                .map(|c| ComponentSummary {
                    index: c.index,
                    source_freq_hz: c.source_freq,
                    bark: c.bark,
                    channel: c.channel,
                    band_lo_hz: c.band.lo(),
                    band_hi_hz: c.band.hi(),
                    target_freq_hz: c.target_freq,
                    envelope_rate_hz: c.envelope_rate,
                })
                .collect(),
        }
    }
}

/// `waveset.json` layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveSetSummary {
    pub f0_hz: f64,
    pub duration_seconds: f64,
    pub components: Vec<ComponentSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSummary {
    pub index: usize,
    pub source_freq_hz: f64,
    pub bark: f64,
    pub channel: u8,
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    pub target_freq_hz: f64,
    pub envelope_rate_hz: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DecomposeOptions {
    pub pitch: PitchConfig,
    pub resample: ResampleQuality,
}

pub fn decompose_speech(audio: &AudioBuffer) -> Result<WaveSet> {
    decompose_speech_with(audio, &DecomposeOptions::default())
}

/// stft → f0 → ladder → Bark bands → one envelope per partial.
pub fn decompose_speech_with(audio: &AudioBuffer, options: &DecomposeOptions) -> Result<WaveSet> {
    if audio.is_empty() {
        return Err(Error::input("cannot decompose empty audio"));
    }
    let audio = audio.resample(ANALYSIS_RATE, options.resample)?;
    let frames = stft(&audio, FFT_SIZE, HOP)?;
    let f0 = estimate_f0_with(&audio, &options.pitch)?;
    let ladder = harmonic_ladder(f0)?;
    let assignments = assign_bands(&ladder)?;

    // |X| of a unit sinusoid under the window is sum(w) / 2.
    let calibration = 2.0 / periodic_hann(FFT_SIZE).iter().sum::<f64>();
    let components = assignments
        .iter()
        .map(|a| {
            let envelope = extract_envelope(&frames, a.source_freq)?
                .into_iter()
                .map(|v| v * calibration)
                .collect();
            Ok(WaveComponent {
                index: a.index,
                source_freq: a.source_freq,
                bark: a.bark,
                channel: a.channel,
                band: a.band,
                target_freq: a.target_freq,
                envelope,
                envelope_rate: frames.frame_rate(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(WaveSet { components, f0, duration_seconds: audio.duration_seconds() })
}
