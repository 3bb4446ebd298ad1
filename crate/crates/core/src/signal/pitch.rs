use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

pub const F0_MIN_HZ: f64 = 85.0;
pub const F0_MAX_HZ: f64 = 255.0;

/// Framewise normalized-autocorrelation pitch tracker.
///
/// The lag search covers a wider range than the reported one so that voices
/// outside 85–255 Hz are still detected and then clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchConfig {
    pub search_min_hz: f64,
    pub search_max_hz: f64,
    pub clamp_min_hz: f64,
    pub clamp_max_hz: f64,
    /// Minimum normalized autocorrelation peak for a frame to count as voiced.
    pub voicing_threshold: f64,
    /// Correlation window per frame.
    pub window_seconds: f64,
    pub hop_seconds: f64,
    /// Earliest peak within this fraction of the frame's best peak wins,
    /// which suppresses sub-octave picks.
    pub octave_tolerance: f64,
    /// Frames quieter than this RMS are skipped.
    pub silence_rms: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            search_min_hz: 40.0,
            search_max_hz: 500.0,
            clamp_min_hz: F0_MIN_HZ,
            clamp_max_hz: F0_MAX_HZ,
            voicing_threshold: 0.3,
            window_seconds: 0.04,
            hop_seconds: 0.02,
            octave_tolerance: 0.85,
            silence_rms: 1e-4,
        }
    }
}

pub fn estimate_f0(audio: &AudioBuffer) -> Result<f64> {
    estimate_f0_with(audio, &PitchConfig::default())
}

/// Median of the voiced frames' pitch, clamped to the configured range.
pub fn estimate_f0_with(audio: &AudioBuffer, config: &PitchConfig) -> Result<f64> {
    let rate = audio.sample_rate() as f64;
    let x = audio.samples();
    let min_lag = ((rate / config.search_max_hz).floor() as usize).max(2);
    let max_lag = (rate / config.search_min_hz).ceil() as usize;
    let window = ((config.window_seconds * rate).round() as usize).max(1);
    let hop = ((config.hop_seconds * rate).round() as usize).max(1);
    let span = window + max_lag + 1;
    if x.len() < span {
        return Err(Error::input(format!(
            "pitch needs at least {:.0} ms of audio",
            1000.0 * span as f64 / rate
        )));
    }

    let mut best_peak = 0.0f64;
    let mut voiced = Vec::new();
    let mut nccf = vec![0.0; max_lag + 2];
    let mut start = 0;
    while start + span <= x.len() {
        let frame = &x[start..start + span];
        start += hop;
        let energy0: f64 = frame[..window].iter().map(|s| s * s).sum();
        if (energy0 / window as f64).sqrt() < config.silence_rms {
            continue;
        }
        // Running energy of the lagged window.
        let mut energy_lag: f64 = frame[min_lag - 1..min_lag - 1 + window].iter().map(|s| s * s).sum();
        for lag in min_lag - 1..=max_lag + 1 {
            if lag > min_lag - 1 {
                let leaving = frame[lag - 1];
                let entering = frame[lag - 1 + window];
                energy_lag += entering * entering - leaving * leaving;
            }
            let cross: f64 = frame[..window].iter().zip(&frame[lag..lag + window]).map(|(a, b)| a * b).sum();
            let denom = (energy0 * energy_lag.max(0.0)).sqrt();
            nccf[lag] = if denom > 0.0 { cross / denom } else { 0.0 };
        }
        let peak = (min_lag..=max_lag).map(|l| nccf[l]).fold(f64::NEG_INFINITY, f64::max);
        best_peak = best_peak.max(peak);
        if peak < config.voicing_threshold {
            continue;
        }
        let accept = peak * config.octave_tolerance;
        let lag = (min_lag..=max_lag)
            .find(|&l| nccf[l] >= accept && nccf[l] >= nccf[l - 1] && nccf[l] >= nccf[l + 1])
            .unwrap_or_else(|| (min_lag..=max_lag).max_by(|&a, &b| nccf[a].total_cmp(&nccf[b])).unwrap());
        voiced.push(rate / parabolic_peak(&nccf, lag));
    }

    if voiced.is_empty() {
        return Err(Error::NoPitch { peak: best_peak, threshold: config.voicing_threshold });
    }
    voiced.sort_by(f64::total_cmp);
    let mid = voiced.len() / 2;
    let median = if voiced.len() % 2 == 1 { voiced[mid] } else { 0.5 * (voiced[mid - 1] + voiced[mid]) };
    Ok(median.clamp(config.clamp_min_hz, config.clamp_max_hz))
}

fn parabolic_peak(values: &[f64], i: usize) -> f64 {
    let (a, b, c) = (values[i - 1], values[i], values[i + 1]);
    let denom = a - 2.0 * b + c;
    if denom.abs() < 1e-12 {
        return i as f64;
    }
    let offset = 0.5 * (a - c) / denom;
    i as f64 + offset.clamp(-0.5, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(f: f64) -> AudioBuffer {
        AudioBuffer::from_fn(1.0, 16000, |t| (2.0 * PI * f * t).sin())
    }

    #[test]
    fn pure_tone_120() {
        let f0 = estimate_f0(&tone(120.0)).unwrap();
        assert!((f0 - 120.0).abs() < 2.0, "f0 = {f0}");
    }

    #[test]
    fn low_tone_clamps_to_floor() {
        assert_eq!(estimate_f0(&tone(60.0)).unwrap(), 85.0);
    }

    #[test]
    fn high_tone_clamps_to_ceiling() {
        assert_eq!(estimate_f0(&tone(330.0)).unwrap(), 255.0);
    }

    #[test]
    fn silence_is_unvoiced() {
        let err = estimate_f0(&AudioBuffer::silence(1.0, 16000)).unwrap_err();
        assert!(matches!(err, Error::NoPitch { .. }));
    }

    #[test]
    fn works_at_other_rates() {
        let a = AudioBuffer::from_fn(1.0, 44100, |t| (2.0 * PI * 180.0 * t).sin());
        let f0 = estimate_f0(&a).unwrap();
        assert!((f0 - 180.0).abs() < 2.0, "f0 = {f0}");
    }

    #[test]
    fn too_short_is_invalid_input() {
        let a = AudioBuffer::from_fn(0.03, 16000, |t| (2.0 * PI * 120.0 * t).sin());
        assert!(matches!(estimate_f0(&a), Err(Error::InvalidInput(_))));
    }
}
