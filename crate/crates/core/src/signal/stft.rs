use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{ANALYSIS_RATE, FFT_SIZE, NUM_BINS};
use crate::audio::{AudioBuffer, ResampleQuality};
use crate::error::{Error, Result};

/// Magnitude/phase frames of a 512-point STFT at 16 kHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralFrames {
    /// frames × 257, non-negative.
    pub magnitudes: Vec<Vec<f64>>,
    /// frames × 257, radians.
    pub phases: Vec<Vec<f64>>,
    pub bin_freqs: Vec<f64>,
    pub hop_seconds: f64,
    pub window_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
    /// Length of the analysed signal in samples.
    pub signal_len: usize,
}

impl SpectralFrames {
    pub fn num_frames(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn bin_spacing(&self) -> f64 {
        self.sample_rate as f64 / self.window_len as f64
    }

    pub fn frame_rate(&self) -> f64 {
        1.0 / self.hop_seconds
    }
}

pub fn periodic_hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Forward STFT with a periodic Hann window. Audio at other rates is
/// resampled to 16 kHz first.
///
/// A signal shorter than one window becomes a single zero-padded frame;
/// otherwise the frame count is `(len - window_len) / hop + 1`.
pub fn stft(audio: &AudioBuffer, window_len: usize, hop: usize) -> Result<SpectralFrames> {
    if audio.is_empty() {
        return Err(Error::input("stft of empty audio"));
    }
    if window_len != FFT_SIZE {
        return Err(Error::config(format!(
            "window length must be {FFT_SIZE} to produce {NUM_BINS} bins, got {window_len}"
        )));
    }
    if hop == 0 || hop > window_len {
        return Err(Error::config(format!("hop must be in 1..={window_len}, got {hop}")));
    }
    let resampled;
    let audio = if audio.sample_rate() == ANALYSIS_RATE {
        audio
    } else {
        resampled = audio.resample(ANALYSIS_RATE, ResampleQuality::default())?;
        &resampled
    };
    let x = audio.samples();
    let num_frames = if x.len() < window_len { 1 } else { (x.len() - window_len) / hop + 1 };

    let window = periodic_hann(window_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window_len);
    let mut buf = vec![Complex::new(0.0, 0.0); window_len];
    let mut magnitudes = Vec::with_capacity(num_frames);
    let mut phases = Vec::with_capacity(num_frames);

    for frame in 0..num_frames {
        let start = frame * hop;
        for (n, slot) in buf.iter_mut().enumerate() {
            let s = x.get(start + n).copied().unwrap_or(0.0);
            *slot = Complex::new(s * window[n], 0.0);
        }
        fft.process(&mut buf);
        magnitudes.push(buf[..NUM_BINS].iter().map(|c| c.norm()).collect());
        phases.push(buf[..NUM_BINS].iter().map(|c| c.arg()).collect());
    }

    let bin_spacing = ANALYSIS_RATE as f64 / window_len as f64;
    Ok(SpectralFrames {
        magnitudes,
        phases,
        bin_freqs: (0..NUM_BINS).map(|k| k as f64 * bin_spacing).collect(),
        hop_seconds: hop as f64 / ANALYSIS_RATE as f64,
        window_len,
        hop,
        sample_rate: ANALYSIS_RATE,
        signal_len: x.len(),
    })
}

/// Inverse STFT by overlap-add normalized by the summed analysis window.
///
/// With a 50% hop the periodic Hann sums to one in the interior, so this is
/// plain overlap-add there; at the edges the division undoes the partial
/// window. Samples no frame covers with non-zero weight (index 0, and any
/// tail past the last frame) come back as zero.
pub fn istft(frames: &SpectralFrames) -> Vec<f64> {
    let n = frames.window_len;
    let window = periodic_hann(n);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let mut out = vec![0.0; frames.signal_len.max(n)];
    let mut weight = vec![0.0; out.len()];
    let mut buf = vec![Complex::new(0.0, 0.0); n];

    for (f, (mags, phases)) in frames.magnitudes.iter().zip(&frames.phases).enumerate() {
        for k in 0..NUM_BINS {
            buf[k] = Complex::from_polar(mags[k], phases[k]);
        }
        // Hermitian mirror for a real signal.
        for k in NUM_BINS..n {
            buf[k] = buf[n - k].conj();
        }
        ifft.process(&mut buf);
        let start = f * frames.hop;
        for j in 0..n {
            let idx = start + j;
            if idx >= out.len() {
                break;
            }
            out[idx] += buf[j].re / n as f64;
            weight[idx] += window[j];
        }
    }
    for (o, w) in out.iter_mut().zip(&weight) {
        *o = if *w > 1e-10 { *o / w } else { 0.0 };
    }
    out.truncate(frames.signal_len);
    out
}

/// Samples recoverable by [`istft`]: those under at least one non-zero window tap.
pub fn reconstructable_range(frames: &SpectralFrames) -> std::ops::Range<usize> {
    let covered = (frames.num_frames() - 1) * frames.hop + frames.window_len;
    1..covered.min(frames.signal_len)
}
