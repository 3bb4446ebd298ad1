use serde::{Deserialize, Serialize};

use super::frames::{FrameRecorder, FrameSequence};
use super::tank::TankConfig;
use crate::error::{Error, Result};
use crate::signal::ChannelWaveform;

/// |h| above this means the scheme has gone unstable.
pub const BLOW_UP_THRESHOLD_M: f64 = 1.0;

/// Two time levels of the heightfield, row-major (`j * nx + i`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub nx: usize,
    pub ny: usize,
    pub h_now: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub t: f64,
}

impl SimState {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Self { nx, ny, h_now: vec![0.0; nx * ny], h_prev: vec![0.0; nx * ny], t: 0.0 }
    }

    pub fn rms(&self) -> f64 {
        (self.h_now.iter().map(|h| h * h).sum::<f64>() / self.h_now.len() as f64).sqrt()
    }
}

/// Sparse Gaussian footprint. The grid-mean of the weights is removed as a
/// uniform offset so a push conserves water volume.
struct Footprint {
    cells: Vec<(usize, f64)>,
    mean: f64,
}

pub struct WaterSim {
    config: TankConfig,
    dt: f64,
    rx: f64,
    ry: f64,
    damping: f64,
    footprints: Vec<Footprint>,
    state: SimState,
}

impl WaterSim {
    /// Validates the tank (including CFL) and starts from a flat surface.
    pub fn new(config: TankConfig) -> Result<Self> {
        config.validate()?;
        let dt = config.dt();
        let c = config.wave_speed_mps;
        let (nx, ny) = (config.grid_nx, config.grid_ny);
        let (dx, dy) = (config.dx(), config.dy());
        let sigma = config.source_radius_m;
        let reach = 4.0 * sigma;
        let footprints = config
            .source_positions
            .iter()
            .map(|&[sx, sy]| {
                let mut fp = Vec::new();
                for j in 0..ny {
                    let y = (j as f64 + 0.5) * dy - sy;
                    if y.abs() > reach {
                        continue;
                    }
                    for i in 0..nx {
                        let x = (i as f64 + 0.5) * dx - sx;
                        if x.abs() > reach {
                            continue;
                        }
                        fp.push((j * nx + i, (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()));
                    }
                }
                let mean = fp.iter().map(|(_, w)| w).sum::<f64>() / (nx * ny) as f64;
                Footprint { cells: fp, mean }
            })
            .collect();
        Ok(Self {
            dt,
            rx: (c * dt / dx).powi(2),
            ry: (c * dt / dy).powi(2),
            damping: config.damping_per_s * dt,
            footprints,
            state: SimState::zeros(nx, ny),
            config,
        })
    }

    pub fn config(&self) -> &TankConfig {
        &self.config
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut SimState {
        &mut self.state
    }

    pub fn into_state(self) -> SimState {
        self.state
    }

    pub fn field_rms(&self) -> f64 {
        self.state.rms()
    }

    /// One leapfrog step with per-channel drive amplitudes.
    pub fn step(&mut self, forcing: &[f64; 6]) -> Result<()> {
        if let Some(k) = forcing.iter().position(|f| !f.is_finite()) {
            return Err(Error::input(format!("non-finite forcing on channel {}", k + 1)));
        }
        let SimState { nx, ny, ref mut h_now, ref mut h_prev, ref mut t } = self.state;
        let (rx, ry, damping) = (self.rx, self.ry, self.damping);

        // h_prev is overwritten in place with h_next: each cell reads only its own old value.
        let mut peak = 0.0f64;
        for j in 0..ny {
            let row = j * nx;
            let up = if j == 0 { row } else { row - nx };
            let down = if j + 1 == ny { row } else { row + nx };
            for i in 0..nx {
                let k = row + i;
                let h = h_now[k];
                let left = h_now[if i == 0 { k } else { k - 1 }];
                let right = h_now[if i + 1 == nx { k } else { k + 1 }];
                let lap = rx * (left - 2.0 * h + right) + ry * (h_now[up + i] - 2.0 * h + h_now[down + i]);
                let prev = h_prev[k];
                let next = 2.0 * h - prev + lap - damping * (h - prev);
                h_prev[k] = next;
            }
        }
        let scale = self.dt * self.dt * self.config.forcing_gain;
        let mut offset = 0.0;
        for (fp, &f) in self.footprints.iter().zip(forcing) {
            if f == 0.0 {
                continue;
            }
            let a = scale * f;
            offset += a * fp.mean;
            for &(k, w) in &fp.cells {
                h_prev[k] += a * w;
            }
        }
        for v in h_prev.iter_mut() {
            *v -= offset;
            peak = peak.max(v.abs());
        }
        std::mem::swap(h_now, h_prev);
        *t += self.dt;
        if !(peak <= BLOW_UP_THRESHOLD_M) {
            return Err(Error::Instability { t: *t, value: peak });
        }
        Ok(())
    }

    /// Steps through the channels' full duration from the current time,
    /// sampling them by linear interpolation at each step's start.
    pub fn drive(&mut self, channels: &[ChannelWaveform], frames: &mut FrameRecorder) -> Result<()> {
        let duration = common_duration(channels)?;
        let start = self.state.t;
        let steps = (duration / self.dt).round() as usize;
        frames.observe(&self.state);
        for _ in 0..steps {
            let local = self.state.t - start;
            let mut forcing = [0.0; 6];
            for ch in channels {
                forcing[(ch.channel - 1) as usize] += ch.sample_at(local);
            }
            self.step(&forcing)?;
            frames.observe(&self.state);
        }
        Ok(())
    }

    /// Steps undriven until the field RMS drops below `rms_threshold` or
    /// `timeout` seconds pass. Returns whether stillness was reached.
    pub fn settle(&mut self, rms_threshold: f64, timeout: f64, frames: &mut FrameRecorder) -> Result<bool> {
        let start = self.state.t;
        frames.observe(&self.state);
        while self.field_rms() >= rms_threshold {
            if self.state.t - start >= timeout {
                return Ok(false);
            }
            self.step(&[0.0; 6])?;
            frames.observe(&self.state);
        }
        Ok(true)
    }
}

fn common_duration(channels: &[ChannelWaveform]) -> Result<f64> {
    let first = channels.first().ok_or_else(|| Error::input("no channels to drive"))?;
    for ch in channels {
        if !(1..=6).contains(&ch.channel) {
            return Err(Error::input(format!("channel {} outside 1..=6", ch.channel)));
        }
        let slack = 1.0 / ch.sample_rate.min(first.sample_rate) as f64;
        if (ch.duration_seconds() - first.duration_seconds()).abs() > slack {
            return Err(Error::input(format!(
                "channel {} lasts {:.4} s but channel {} lasts {:.4} s",
                ch.channel,
                ch.duration_seconds(),
                first.channel,
                first.duration_seconds()
            )));
        }
    }
    Ok(first.duration_seconds())
}

/// Simulates a flat tank under `channels`, snapshotting at `frame_rate`.
pub fn run(config: &TankConfig, channels: &[ChannelWaveform], frame_rate: u32) -> Result<FrameSequence> {
    let mut sim = WaterSim::new(config.clone())?;
    if frame_rate == 0 || frame_rate as f64 > 1.0 / sim.dt() + 1e-9 {
        return Err(Error::input(format!(
            "frame rate {frame_rate} Hz must be in 1..={:.1}",
            1.0 / sim.dt()
        )));
    }
    let mut frames = FrameRecorder::new(config.grid_nx, config.grid_ny, frame_rate, sim.dt());
    sim.drive(channels, &mut frames)?;
    Ok(frames.finish())
}
