use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::decompose::{WaveComponent, WaveSet};
use crate::error::{Error, Result};

pub const DEFAULT_OUT_RATE: u32 = 8000;

/// One subwoofer drive signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelWaveform {
    pub channel: u8,
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl ChannelWaveform {
    pub fn silent(channel: u8, duration: f64, sample_rate: u32) -> Self {
        let n = (duration * sample_rate as f64).round() as usize;
        Self { channel, samples: vec![0.0; n], sample_rate }
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Linear interpolation at time `t`; zero outside the signal.
    pub fn sample_at(&self, t: f64) -> f64 {
        let pos = t * self.sample_rate as f64;
        if pos < 0.0 || self.samples.is_empty() {
            return 0.0;
        }
        let i = pos.floor() as usize;
        let w = pos - i as f64;
        match (self.samples.get(i), self.samples.get(i + 1)) {
            (Some(a), Some(b)) => a + w * (b - a),
            (Some(a), None) if w == 0.0 => *a,
            _ => 0.0,
        }
    }
}

/// Carrier at the component's target frequency, shaped by its envelope.
/// Peak-normalized only when the peak would exceed 1.
pub fn synthesize_channel(component: &WaveComponent, duration: f64, out_rate: u32) -> Result<ChannelWaveform> {
    if out_rate < 1000 {
        return Err(Error::input(format!("output rate must be at least 1000 Hz, got {out_rate}")));
    }
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::input(format!("duration must be positive, got {duration}")));
    }
    let n = (duration * out_rate as f64).round() as usize;
    let rate = out_rate as f64;
    let env = &component.envelope;
    let env_at = |t: f64| -> f64 {
        if env.is_empty() {
            return 0.0;
        }
        let pos = t * component.envelope_rate;
        let i = pos.floor() as usize;
        if i + 1 >= env.len() {
            return env[env.len() - 1];
        }
        let w = pos - i as f64;
        env[i] + w * (env[i + 1] - env[i])
    };

    let mut samples: Vec<f64> = (0..n)
        .map(|j| {
            let t = j as f64 / rate;
            env_at(t) * (2.0 * PI * component.target_freq * t).sin()
        })
        .collect();
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 1.0 {
        samples.iter_mut().for_each(|s| *s /= peak);
    }
    Ok(ChannelWaveform { channel: component.channel, samples, sample_rate: out_rate })
}

/// All six channels, ordered by channel number.
pub fn synthesize_waveset(set: &WaveSet, out_rate: u32) -> Result<Vec<ChannelWaveform>> {
    let mut channels = set
        .components
        .iter()
        .map(|c| synthesize_channel(c, set.duration_seconds, out_rate))
        .collect::<Result<Vec<_>>>()?;
    channels.sort_by_key(|c| c.channel);
    Ok(channels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Band;

    fn component(target: f64, envelope: Vec<f64>) -> WaveComponent {
        WaveComponent {
            index: 0,
            source_freq: 150.0,
            bark: 1.4,
            channel: 3,
            band: Band::Low,
            target_freq: target,
            envelope,
            envelope_rate: 62.5,
        }
    }

    fn upcrossings(s: &[f64]) -> usize {
        s.windows(2).filter(|w| w[0] <= 0.0 && w[1] > 0.0).count()
    }

    #[test]
    fn zero_envelope_is_silent() {
        let w = synthesize_channel(&component(30.0, vec![0.0; 70]), 1.0, 8000).unwrap();
        assert_eq!(w.samples.len(), 8000);
        assert!(w.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn unit_envelope_at_30_hz_has_30_upcrossings() {
        let w = synthesize_channel(&component(30.0, vec![1.0; 70]), 1.0, 8000).unwrap();
        assert_eq!(upcrossings(&w.samples), 30);
    }

    #[test]
    fn loud_envelope_is_normalized() {
        let w = synthesize_channel(&component(35.0, vec![128.0; 70]), 1.0, 8000).unwrap();
        assert!((w.peak() - 1.0).abs() < 1e-12);
        let quiet = synthesize_channel(&component(35.0, vec![0.5; 70]), 1.0, 8000).unwrap();
        assert!(quiet.peak() <= 0.5 + 1e-12 && quiet.peak() > 0.49);
    }

    #[test]
    fn rejects_low_rate_and_bad_duration() {
        assert!(synthesize_channel(&component(30.0, vec![1.0]), 1.0, 999).is_err());
        assert!(synthesize_channel(&component(30.0, vec![1.0]), 0.0, 8000).is_err());
    }

    #[test]
    fn sample_at_interpolates() {
        let w = ChannelWaveform { channel: 1, samples: vec![0.0, 1.0, 0.0], sample_rate: 1000 };
        assert_eq!(w.sample_at(0.0005), 0.5);
        assert_eq!(w.sample_at(0.002), 0.0);
        assert_eq!(w.sample_at(1.0), 0.0);
    }
}
