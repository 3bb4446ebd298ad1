use super::stft::SpectralFrames;
use crate::error::{Error, Result};

pub const ENVELOPE_TIME_CONSTANT_S: f64 = 0.03;

/// Per-frame magnitude at `f`, linearly interpolated between the two
/// bracketing bins.
pub fn interpolate_bin_magnitudes(frames: &SpectralFrames, f: f64) -> Result<Vec<f64>> {
    let nyquist = frames.sample_rate as f64 / 2.0;
    if !(0.0..=nyquist).contains(&f) {
        return Err(Error::input(format!("envelope frequency {f} Hz outside [0, {nyquist}]")));
    }
    let pos = f / frames.bin_spacing();
    let last = frames.bin_freqs.len() - 1;
    let k = (pos.floor() as usize).min(last);
    let w = pos - k as f64;
    Ok(frames
        .magnitudes
        .iter()
        .map(|m| if k == last || w == 0.0 { m[k] } else { (1.0 - w) * m[k] + w * m[k + 1] })
        .collect())
}

/// Single-pole low-pass at `rate_hz`, seeded with the first value.
pub fn smooth_envelope(values: &[f64], rate_hz: f64, time_constant_s: f64) -> Vec<f64> {
    let alpha = 1.0 - (-1.0 / (rate_hz * time_constant_s)).exp();
    let mut state = values.first().copied().unwrap_or(0.0);
    values
        .iter()
        .map(|&v| {
            state += alpha * (v - state);
            state.max(0.0)
        })
        .collect()
}

/// Smoothed amplitude track of frequency `f`, one value per frame.
pub fn extract_envelope(frames: &SpectralFrames, f: f64) -> Result<Vec<f64>> {
    let raw = interpolate_bin_magnitudes(frames, f)?;
    Ok(smooth_envelope(&raw, frames.frame_rate(), ENVELOPE_TIME_CONSTANT_S))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::AudioBuffer;
    use crate::signal::stft;
    use std::f64::consts::PI;

    #[test]
    fn silence_gives_zero_envelope() {
        let frames = stft(&AudioBuffer::silence(1.0, 16000), 512, 256).unwrap();
        assert!(extract_envelope(&frames, 100.0).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn steady_tone_gives_flat_envelope() {
        let a = AudioBuffer::from_fn(1.0, 16000, |t| (2.0 * PI * 100.0 * t).sin());
        let frames = stft(&a, 512, 256).unwrap();
        let env = extract_envelope(&frames, 100.0).unwrap();
        let interior = &env[2..env.len() - 2];
        let mean = interior.iter().sum::<f64>() / interior.len() as f64;
        let var = interior.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / interior.len() as f64;
        assert!(var.sqrt() / mean < 0.1);
    }

    #[test]
    fn bin_center_reads_that_bin() {
        let a = AudioBuffer::from_fn(0.5, 16000, |t| (2.0 * PI * 93.75 * t).sin() + 0.3 * (2.0 * PI * 700.0 * t).cos());
        let frames = stft(&a, 512, 256).unwrap();
        let raw = interpolate_bin_magnitudes(&frames, 93.75).unwrap();
        let bin: Vec<f64> = frames.magnitudes.iter().map(|m| m[3]).collect();
        assert_eq!(raw, bin);
        let top = interpolate_bin_magnitudes(&frames, 8000.0).unwrap();
        assert_eq!(top, frames.magnitudes.iter().map(|m| m[256]).collect::<Vec<_>>());
    }

    #[test]
    fn out_of_range_frequency_rejected() {
        let frames = stft(&AudioBuffer::silence(0.1, 16000), 512, 256).unwrap();
        assert!(extract_envelope(&frames, -1.0).is_err());
        assert!(extract_envelope(&frames, 8000.5).is_err());
    }
}
