//! Vocal emotion → priming excitation for the contemplation phase.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::signal::{estimate_f0, Band, ChannelWaveform};

/// Declaration order is alphabetical, so `Ord` doubles as the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmotionLabel {
    Angry,
    Disgusted,
    Fearful,
    Happy,
    Neutral,
    Sad,
    Surprised,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; 7] = [
        EmotionLabel::Angry,
        EmotionLabel::Disgusted,
        EmotionLabel::Fearful,
        EmotionLabel::Happy,
        EmotionLabel::Neutral,
        EmotionLabel::Sad,
        EmotionLabel::Surprised,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EmotionLabel::Angry => "angry",
            EmotionLabel::Disgusted => "disgusted",
            EmotionLabel::Fearful => "fearful",
            EmotionLabel::Happy => "happy",
            EmotionLabel::Neutral => "neutral",
            EmotionLabel::Sad => "sad",
            EmotionLabel::Surprised => "surprised",
        }
    }

    /// Arousal tier: calm labels prime the low band, agitated ones the high band.
    pub fn band(self) -> Band {
        match self {
            EmotionLabel::Sad | EmotionLabel::Neutral => Band::Low,
            EmotionLabel::Happy | EmotionLabel::Disgusted => Band::Mid,
            EmotionLabel::Angry | EmotionLabel::Fearful | EmotionLabel::Surprised => Band::High,
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmotionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EmotionLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::input(format!("unknown emotion label {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScores", into = "RawScores")]
pub struct EmotionScores {
    scores: BTreeMap<EmotionLabel, f64>,
    dominant: EmotionLabel,
}

#[derive(Serialize, Deserialize)]
struct RawScores {
    scores: BTreeMap<EmotionLabel, f64>,
    dominant: Option<EmotionLabel>,
}

impl TryFrom<RawScores> for EmotionScores {
    type Error = Error;

    fn try_from(raw: RawScores) -> Result<Self> {
        EmotionScores::new(raw.scores)
    }
}

impl From<EmotionScores> for RawScores {
    fn from(s: EmotionScores) -> Self {
        RawScores { scores: s.scores, dominant: Some(s.dominant) }
    }
}

impl EmotionScores {
    /// Validates a full probability vector over the seven labels. Missing
    /// labels count as zero.
    pub fn new(scores: BTreeMap<EmotionLabel, f64>) -> Result<Self> {
        let mut full: BTreeMap<EmotionLabel, f64> = EmotionLabel::ALL.iter().map(|&l| (l, 0.0)).collect();
        for (label, p) in scores {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::input(format!("score for {label} must be non-negative, got {p}")));
            }
            full.insert(label, p);
        }
        let sum: f64 = full.values().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::input(format!("scores sum to {sum}, expected 1")));
        }
        let dominant = argmax(&full);
        Ok(Self { scores: full, dominant })
    }

    /// Normalizes non-negative weights into probabilities.
    pub fn from_weights(weights: impl IntoIterator<Item = (EmotionLabel, f64)>) -> Result<Self> {
        let weights: BTreeMap<EmotionLabel, f64> = weights.into_iter().collect();
        let total: f64 = weights.values().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::input("emotion weights must have a positive finite sum"));
        }
        EmotionScores::new(weights.into_iter().map(|(l, w)| (l, w / total)).collect())
    }

    pub fn one_hot(label: EmotionLabel) -> Self {
        EmotionScores::new(BTreeMap::from([(label, 1.0)])).expect("one-hot is a valid distribution")
    }

    pub fn dominant(&self) -> EmotionLabel {
        self.dominant
    }

    pub fn confidence(&self) -> f64 {
        self.scores[&self.dominant]
    }

    pub fn get(&self, label: EmotionLabel) -> f64 {
        self.scores[&label]
    }

    pub fn scores(&self) -> &BTreeMap<EmotionLabel, f64> {
        &self.scores
    }
}

fn argmax(scores: &BTreeMap<EmotionLabel, f64>) -> EmotionLabel {
    // Strict comparison keeps the first (alphabetical) label on ties.
    let mut best = (EmotionLabel::Angry, f64::NEG_INFINITY);
    for (&label, &p) in scores {
        if p > best.1 {
            best = (label, p);
        }
    }
    best.0
}

pub trait EmotionClassifier: Send + Sync {
    fn classify(&self, audio: &AudioBuffer) -> Result<EmotionScores>;
}

pub const MIN_CLASSIFY_SECONDS: f64 = 0.5;

/// Transparent acoustic heuristic standing in for a neural classifier.
///
/// Loudness, pitch height and a syllable-rate proxy give an arousal value;
/// pitch height and brightness give a valence value; labels are scored by
/// distance to fixed prototypes on that grid.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceClassifier;

/// (valence, arousal) prototypes.
const PROTOTYPES: [(EmotionLabel, f64, f64); 7] = [
    (EmotionLabel::Angry, -0.6, 0.9),
    (EmotionLabel::Disgusted, -0.7, 0.45),
    (EmotionLabel::Fearful, -0.5, 0.75),
    (EmotionLabel::Happy, 0.7, 0.6),
    (EmotionLabel::Neutral, 0.0, 0.2),
    (EmotionLabel::Sad, -0.6, 0.15),
    (EmotionLabel::Surprised, 0.4, 0.85),
];
const PROTOTYPE_TEMPERATURE: f64 = 0.05;
const SILENCE_RMS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcousticFeatures {
    pub rms: f64,
    /// Loudness mapped to [0, 1] over -50..-10 dBFS.
    pub energy: f64,
    /// Pitch mapped to [0, 1] over 85..255 Hz; 0.5 when unvoiced.
    pub pitch_height: f64,
    /// Energy-envelope peaks per second mapped to [0, 1] over 0..8.
    pub rate: f64,
    /// Zero-crossing rate mapped to [0, 1] over 0..0.3.
    pub brightness: f64,
}

impl AcousticFeatures {
    pub fn measure(audio: &AudioBuffer) -> Self {
        let rms = audio.rms();
        let db = 20.0 * rms.max(1e-12).log10();
        let energy = ((db + 50.0) / 40.0).clamp(0.0, 1.0);
        let pitch_height = match estimate_f0(audio) {
            Ok(f0) => ((f0 - 85.0) / 170.0).clamp(0.0, 1.0),
            Err(_) => 0.5,
        };
        let x = audio.samples();
        let crossings = x.windows(2).filter(|w| (w[0] < 0.0) != (w[1] < 0.0)).count();
        let brightness = (crossings as f64 / x.len().max(1) as f64 / 0.3).clamp(0.0, 1.0);
        Self { rms, energy, pitch_height, rate: syllable_rate(audio) / 8.0, brightness: brightness.min(1.0) }
    }

    pub fn arousal(&self) -> f64 {
        (0.5 * self.energy + 0.25 * self.pitch_height + 0.25 * self.rate.min(1.0)).clamp(0.0, 1.0)
    }

    pub fn valence(&self) -> f64 {
        (1.2 * (self.pitch_height - 0.5) + 0.8 * (self.brightness - 0.3)).clamp(-1.0, 1.0)
    }
}

/// Prominent maxima of the 10 ms RMS envelope, per second. A peak must top
/// its ±50 ms neighbourhood and stand 30% above the ±100 ms minimum.
fn syllable_rate(audio: &AudioBuffer) -> f64 {
    let frame = ((audio.sample_rate() as f64 * 0.01).round() as usize).max(1);
    let env: Vec<f64> = audio
        .samples()
        .chunks(frame)
        .map(|c| (c.iter().map(|s| s * s).sum::<f64>() / c.len() as f64).sqrt())
        .collect();
    let window = |i: usize, r: usize| &env[i.saturating_sub(r)..(i + r + 1).min(env.len())];
    let mean = env.iter().sum::<f64>() / env.len().max(1) as f64;
    let peaks = (0..env.len())
        .filter(|&i| {
            let v = env[i];
            let near = window(i, 5);
            let min = window(i, 10).iter().copied().fold(f64::INFINITY, f64::min);
            v > 0.5 * mean
                && near.iter().all(|&u| u <= v)
                && near.iter().position(|&u| u == v).map(|p| p + i.saturating_sub(5)) == Some(i)
                && v >= 1.3 * min
        })
        .count();
    peaks as f64 / audio.duration_seconds().max(1e-9)
}

impl EmotionClassifier for ReferenceClassifier {
    fn classify(&self, audio: &AudioBuffer) -> Result<EmotionScores> {
        if audio.duration_seconds() < MIN_CLASSIFY_SECONDS {
            return Err(Error::input(format!(
                "emotion classification needs at least {MIN_CLASSIFY_SECONDS} s of audio"
            )));
        }
        let features = AcousticFeatures::measure(audio);
        if features.rms < SILENCE_RMS {
            return Ok(EmotionScores::one_hot(EmotionLabel::Neutral));
        }
        let (valence, arousal) = (features.valence(), features.arousal());
        EmotionScores::from_weights(PROTOTYPES.iter().map(|&(label, v, a)| {
            let d2 = (valence - v).powi(2) + (arousal - a).powi(2);
            (label, (-d2 / PROTOTYPE_TEMPERATURE).exp())
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurfaceCharacter {
    SlowUndulation,
    StandingWave,
    DenseEnergetic,
}

impl SurfaceCharacter {
    pub fn of_band(band: Band) -> Self {
        match band {
            Band::Low => SurfaceCharacter::SlowUndulation,
            Band::Mid => SurfaceCharacter::StandingWave,
            Band::High => SurfaceCharacter::DenseEnergetic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSpec {
    pub band: Band,
    pub freq: f64,
    pub character: SurfaceCharacter,
}

/// Dominant label picks the band; its confidence places the frequency in it.
pub fn emotion_to_band(scores: &EmotionScores) -> ExcitationSpec {
    let band = scores.dominant().band();
    ExcitationSpec { band, freq: band.lerp(scores.confidence()), character: SurfaceCharacter::of_band(band) }
}

pub const CONTEMPLATION_AMPLITUDE: f64 = 0.8;
pub const CONTEMPLATION_FADE_S: f64 = 2.0;

pub fn contemplation_gain(t: f64) -> f64 {
    CONTEMPLATION_AMPLITUDE * (t / CONTEMPLATION_FADE_S).clamp(0.0, 1.0)
}

/// The same faded-in sinusoid on all six channels.
pub fn contemplation_waveform(spec: &ExcitationSpec, duration: f64, out_rate: u32) -> Result<Vec<ChannelWaveform>> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::input(format!("duration must be positive, got {duration}")));
    }
    if out_rate == 0 {
        return Err(Error::input("output rate must be positive"));
    }
    let n = (duration * out_rate as f64).round() as usize;
    let rate = out_rate as f64;
    let samples: Vec<f64> = (0..n)
        .map(|j| {
            let t = j as f64 / rate;
            contemplation_gain(t) * (2.0 * PI * spec.freq * t).sin()
        })
        .collect();
    Ok((1..=6)
        .map(|channel| ChannelWaveform { channel, samples: samples.clone(), sample_rate: out_rate })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_is_exhaustive() {
        for label in EmotionLabel::ALL {
            let spec = emotion_to_band(&EmotionScores::one_hot(label));
            assert!(Band::ALL.contains(&spec.band));
            assert_eq!(spec.character, SurfaceCharacter::of_band(spec.band));
            assert_eq!(label.as_str().parse::<EmotionLabel>().unwrap(), label);
        }
    }

    #[test]
    fn sad_with_full_confidence() {
        let spec = emotion_to_band(&EmotionScores::one_hot(EmotionLabel::Sad));
        assert_eq!(spec.band, Band::Low);
        assert_eq!(spec.freq, 40.0);
        assert_eq!(spec.character, SurfaceCharacter::SlowUndulation);
    }

    #[test]
    fn barely_dominant_angry() {
        let eps = 1e-3;
        let rest = (1.0 - (1.0 / 7.0 + eps)) / 6.0;
        let scores = EmotionScores::new(
            EmotionLabel::ALL
                .iter()
                .map(|&l| (l, if l == EmotionLabel::Angry { 1.0 / 7.0 + eps } else { rest }))
                .collect(),
        )
        .unwrap();
        assert_eq!(scores.dominant(), EmotionLabel::Angry);
        let spec = emotion_to_band(&scores);
        assert!((spec.freq - (80.0 + 20.0 / 7.0)).abs() < 20.0 * eps + 1e-9);
    }

    #[test]
    fn ties_go_to_first_label() {
        let uniform = EmotionScores::from_weights(EmotionLabel::ALL.map(|l| (l, 1.0))).unwrap();
        assert_eq!(uniform.dominant(), EmotionLabel::Angry);
        let tie = EmotionScores::new(BTreeMap::from([(EmotionLabel::Sad, 0.5), (EmotionLabel::Happy, 0.5)])).unwrap();
        assert_eq!(tie.dominant(), EmotionLabel::Happy);
    }

    #[test]
    fn invalid_scores_rejected() {
        assert!(EmotionScores::new(BTreeMap::from([(EmotionLabel::Sad, 0.5)])).is_err());
        assert!(EmotionScores::new(BTreeMap::from([(EmotionLabel::Sad, 1.5), (EmotionLabel::Happy, -0.5)])).is_err());
    }

    #[test]
    fn silence_is_neutral() {
        let scores = ReferenceClassifier.classify(&AudioBuffer::silence(1.0, 16000)).unwrap();
        assert_eq!(scores.dominant(), EmotionLabel::Neutral);
    }

    #[test]
    fn short_audio_rejected() {
        assert!(ReferenceClassifier.classify(&AudioBuffer::silence(0.4, 16000)).is_err());
    }

    #[test]
    fn loud_fast_high_voice_is_aroused() {
        // 220 Hz buzz gated at 6 Hz: loud, high, rapid.
        let a = AudioBuffer::from_fn(2.0, 16000, |t| {
            let gate = if (t * 6.0).fract() < 0.6 { 1.0 } else { 0.05 };
            0.7 * gate * (2.0 * (t * 220.0).fract() - 1.0)
        });
        let scores = ReferenceClassifier.classify(&a).unwrap();
        assert_eq!(scores.dominant().band(), Band::High, "{scores:?}");
        let quiet = AudioBuffer::from_fn(2.0, 16000, |t| 0.01 * (2.0 * PI * 95.0 * t).sin());
        let calm = ReferenceClassifier.classify(&quiet).unwrap();
        assert_eq!(calm.dominant().band(), Band::Low, "{calm:?}");
    }

    #[test]
    fn serde_round_trip_validates() {
        let s = EmotionScores::one_hot(EmotionLabel::Happy);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<EmotionScores>(&json).unwrap(), s);
        assert!(serde_json::from_str::<EmotionScores>(r#"{"scores":{"sad":0.2},"dominant":null}"#).is_err());
    }

    #[test]
    fn contemplation_fade() {
        let spec = ExcitationSpec { band: Band::Low, freq: 30.0, character: SurfaceCharacter::SlowUndulation };
        let ch = contemplation_waveform(&spec, 4.0, 8000).unwrap();
        assert_eq!(ch.len(), 6);
        assert!(ch.iter().all(|c| c.samples == ch[0].samples));
        assert!((contemplation_gain(1.0) - 0.4).abs() < 1e-12);
        assert!(ch[0].peak() <= 0.8);
    }
}
