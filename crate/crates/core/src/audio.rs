use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mono audio at a fixed sample rate. Nominal amplitude range is [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::input("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::input(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn silence(seconds: f64, sample_rate: u32) -> Self {
        let n = (seconds * sample_rate as f64).round() as usize;
        Self { samples: vec![0.0; n], sample_rate }
    }

    /// Samples `f(t)` for `seconds` of audio.
    pub fn from_fn(seconds: f64, sample_rate: u32, f: impl Fn(f64) -> f64) -> Self {
        let n = (seconds * sample_rate as f64).round() as usize;
        let rate = sample_rate as f64;
        let samples = (0..n).map(|i| f(i as f64 / rate)).collect();
        Self { samples, sample_rate }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Keeps at most `seconds` of audio from the start.
    pub fn truncate_seconds(&mut self, seconds: f64) {
        let max = (seconds * self.sample_rate as f64).floor() as usize;
        self.samples.truncate(max);
    }

    /// Resamples with a Hann-windowed sinc kernel. `quality` is the kernel
    /// half-width in zero crossings of the (possibly narrowed) low-pass.
    pub fn resample(&self, out_rate: u32, quality: ResampleQuality) -> Result<AudioBuffer> {
        if out_rate == 0 {
            return Err(Error::input("output sample rate must be positive"));
        }
        if out_rate == self.sample_rate {
            return Ok(self.clone());
        }
        let ratio = out_rate as f64 / self.sample_rate as f64;
        // Cutoff relative to the input Nyquist; narrowed when downsampling.
        let scale = ratio.min(1.0);
        let half_width = quality.zero_crossings as f64 / scale;
        let out_len = (self.samples.len() as f64 * ratio).round() as usize;
        let input = &self.samples;
        let last = input.len() as isize - 1;

        let samples = (0..out_len)
            .map(|j| {
                let t = j as f64 / ratio;
                let lo = ((t - half_width).ceil() as isize).max(0);
                let hi = ((t + half_width).floor() as isize).min(last);
                let mut acc = 0.0;
                for k in lo..=hi {
                    let d = t - k as f64;
                    let window = 0.5 * (1.0 + (PI * d / half_width).cos());
                    acc += input[k as usize] * scale * sinc(scale * d) * window;
                }
                acc
            })
            .collect();
        Ok(AudioBuffer { samples, sample_rate: out_rate })
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleQuality {
    pub zero_crossings: u32,
}

impl Default for ResampleQuality {
    fn default() -> Self {
        Self { zero_crossings: 16 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(AudioBuffer::new(vec![0.0, f64::NAN], 16000).is_err());
        assert!(AudioBuffer::new(vec![0.0], 0).is_err());
    }

    #[test]
    fn resample_preserves_low_tone() {
        let tone = AudioBuffer::from_fn(0.5, 44100, |t| (2.0 * PI * 440.0 * t).sin());
        let out = tone.resample(16000, ResampleQuality::default()).unwrap();
        assert_eq!(out.len(), 8000);
        // Compare in the interior, away from the kernel's edge effects.
        let max_err = (200..7800)
            .map(|j| (out.samples()[j] - (2.0 * PI * 440.0 * j as f64 / 16000.0).sin()).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 5e-3, "max_err = {max_err}");
    }

    #[test]
    fn truncation_caps_duration() {
        let mut a = AudioBuffer::silence(17.0, 16000);
        a.truncate_seconds(15.0);
        assert_eq!(a.len(), 240_000);
    }
}
