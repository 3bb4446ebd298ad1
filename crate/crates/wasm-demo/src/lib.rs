//! Three operations for the static demo page in `www/`:
//!
//! - `ladder(f0)`: the six harmonic-ladder frequencies, their Bark values and
//!   band assignments.
//! - `decompose(samples, rate)`: a full waveset summary of recorded or
//!   uploaded audio.
//! - `Tank`: a small surface driven by the contemplation tone for a chosen
//!   emotion, rendered to grayscale.
//!
//! Each export is a thin wrapper over a plain function so the logic is
//! testable off the browser.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;
use ww_core::sentiment::{contemplation_waveform, EmotionLabel, ExcitationSpec, SurfaceCharacter};
use ww_core::signal::{assign_bands, decompose_speech, harmonic_ladder, ChannelWaveform};
use ww_core::watersim::{render_frame, TankConfig, WaterSim};
use ww_core::AudioBuffer;

pub fn ladder_json(f0: f64) -> Result<Value, String> {
    let freqs = harmonic_ladder(f0).map_err(|e| e.to_string())?;
    let bands = assign_bands(&freqs).map_err(|e| e.to_string())?;
    let rungs: Vec<Value> = freqs
        .iter()
        .zip(bands.iter())
        .map(|(&f, b)| {
            json!({
                "freq_hz": f,
                "bark": b.bark,
                "channel": b.channel,
                "band_lo_hz": b.band.lo(),
                "band_hi_hz": b.band.hi(),
                "target_freq_hz": b.target_freq,
            })
        })
        .collect();
    Ok(json!({"f0_hz": f0, "rungs": rungs}))
}

pub fn decompose_json(samples: &[f32], sample_rate: u32) -> Result<Value, String> {
    let audio = AudioBuffer::new(samples.iter().map(|&s| s as f64).collect(), sample_rate).map_err(|e| e.to_string())?;
    let waveset = decompose_speech(&audio).map_err(|e| e.to_string())?;
    serde_json::to_value(waveset.summary()).map_err(|e| e.to_string())
}

/// A reduced tank for interactive stepping. Coarse grids cannot carry the
/// short drive wavelengths, so the field there responds in place; cutting
/// such a drive off abruptly dumps its velocity into slow sloshing modes,
/// hence the release ramp.
pub struct TankModel {
    sim: WaterSim,
    drive: Vec<ChannelWaveform>,
    drive_s: f64,
    level: f64,
    freq_hz: f64,
}

const RELEASE_S: f64 = 0.5;

impl TankModel {
    /// `label` is one of the seven emotion labels; `confidence` in [0, 1]
    /// places the drive frequency inside that label's band.
    pub fn new(nx: usize, ny: usize, label: &str, confidence: f64) -> Result<Self, String> {
        let label: EmotionLabel = label.parse().map_err(|e: ww_core::Error| e.to_string())?;
        let band = label.band();
        let spec = ExcitationSpec { band, freq: band.lerp(confidence.clamp(0.0, 1.0)), character: SurfaceCharacter::of_band(band) };
        let sim = WaterSim::new(TankConfig::scaled(nx, ny)).map_err(|e| e.to_string())?;
        // Four seconds of the contemplation tone, looped after the fade.
        let drive = contemplation_waveform(&spec, 4.0, 8000).map_err(|e| e.to_string())?;
        Ok(Self { sim, drive, drive_s: 0.0, level: 1.0, freq_hz: spec.freq })
    }

    pub fn freq_hz(&self) -> f64 {
        self.freq_hz
    }

    pub fn time(&self) -> f64 {
        self.sim.state().t
    }

    /// Advances by `seconds`, driving with the contemplation tone. With
    /// `driven` false the tone fades out over half a second and the surface
    /// settles.
    pub fn advance(&mut self, seconds: f64, driven: bool) -> Result<(), String> {
        let dt = self.sim.dt();
        let steps = (seconds.max(0.0) / dt).round() as usize;
        for _ in 0..steps {
            let mut forcing = [0.0; 6];
            let ramp = dt / RELEASE_S;
            self.level = if driven { (self.level + ramp).min(1.0) } else { (self.level - ramp).max(0.0) };
            if self.level > 0.0 {
                // Past the fade-in, loop the steady second half.
                let t = if self.drive_s < 4.0 { self.drive_s } else { 2.0 + (self.drive_s - 2.0) % 2.0 };
                for ch in &self.drive {
                    forcing[(ch.channel - 1) as usize] = self.level * ch.sample_at(t);
                }
                self.drive_s += dt;
            }
            self.sim.step(&forcing).map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    pub fn rms(&self) -> f64 {
        self.sim.field_rms()
    }

    /// Grayscale pixels, row-major, `nx` wide.
    pub fn pixels(&self) -> Vec<u8> {
        let state = self.sim.state();
        let field: Vec<f32> = state.h_now.iter().map(|&v| v as f32).collect();
        render_frame(&field, state.nx, state.ny).pixels
    }
}

#[wasm_bindgen]
pub fn ladder(f0: f64) -> Result<String, JsError> {
    ladder_json(f0).map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn decompose(samples: &[f32], sample_rate: u32) -> Result<String, JsError> {
    decompose_json(samples, sample_rate).map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub struct Tank {
    model: TankModel,
}

#[wasm_bindgen]
impl Tank {
    #[wasm_bindgen(constructor)]
    pub fn new(nx: usize, ny: usize, label: &str, confidence: f64) -> Result<Tank, JsError> {
        TankModel::new(nx, ny, label, confidence).map(|model| Tank { model }).map_err(|e| JsError::new(&e))
    }

    pub fn advance(&mut self, seconds: f64, driven: bool) -> Result<(), JsError> {
        self.model.advance(seconds, driven).map_err(|e| JsError::new(&e))
    }

    pub fn pixels(&self) -> Vec<u8> {
        self.model.pixels()
    }

    pub fn rms(&self) -> f64 {
        self.model.rms()
    }

    pub fn time(&self) -> f64 {
        self.model.time()
    }

    #[wasm_bindgen(getter)]
    pub fn freq_hz(&self) -> f64 {
        self.model.freq_hz()
    }
}
