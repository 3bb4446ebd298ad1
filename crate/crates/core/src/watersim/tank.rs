use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INCH: f64 = 0.0254;
pub const US_GALLON_M3: f64 = 231.0 * INCH * INCH * INCH;
pub const GRAVITY: f64 = 9.81;
pub const SUBWOOFER_SPACING_M: f64 = 12.0 * INCH;

/// Water depth for `gallons` (US) spread over a `length × width` floor.
pub fn depth_for_volume(gallons: f64, length_m: f64, width_m: f64) -> f64 {
    gallons * US_GALLON_M3 / (length_m * width_m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TankConfig {
    pub length_m: f64,
    pub width_m: f64,
    pub depth_m: f64,
    pub grid_nx: usize,
    pub grid_ny: usize,
    /// Surface wave speed; the shallow-water value `sqrt(g * depth)` by default.
    pub wave_speed_mps: f64,
    pub damping_per_s: f64,
    /// Subwoofer centres in metres, channel 1 first.
    pub source_positions: Vec<[f64; 2]>,
    /// Gaussian footprint σ of each source. The default's half-maximum width
    /// (~0.19 m) matches an 8-inch driver.
    pub source_radius_m: f64,
    /// Vertical acceleration (m/s²) per unit of channel amplitude.
    pub forcing_gain: f64,
    /// Time step; derived from the CFL bound and the highest drive band when absent.
    pub dt_s: Option<f64>,
}

impl Default for TankConfig {
    fn default() -> Self {
        let length_m = 72.0 * INCH;
        let width_m = 12.0 * INCH;
        let depth_m = depth_for_volume(2.0, length_m, width_m);
        Self {
            length_m,
            width_m,
            depth_m,
            grid_nx: 512,
            grid_ny: 86,
            wave_speed_mps: (GRAVITY * depth_m).sqrt(),
            damping_per_s: 1.5,
            source_positions: centerline_sources(length_m, width_m, SUBWOOFER_SPACING_M),
            source_radius_m: 0.08,
            forcing_gain: 10.0,
            dt_s: None,
        }
    }
}

/// Six sources evenly spaced along the long axis, centred in the tank.
pub fn centerline_sources(length_m: f64, width_m: f64, spacing_m: f64) -> Vec<[f64; 2]> {
    (0..6)
        .map(|k| [0.5 * length_m + (k as f64 - 2.5) * spacing_m, 0.5 * width_m])
        .collect()
}

/// Highest drive frequency the default step must resolve (top of the 80–100 Hz band).
const MAX_DRIVE_HZ: f64 = 100.0;
const SAMPLES_PER_DRIVE_CYCLE: f64 = 10.0;

impl TankConfig {
    /// A small tank with the default physics, for tests and the browser demo.
    pub fn scaled(nx: usize, ny: usize) -> Self {
        let d = Self::default();
        Self { grid_nx: nx, grid_ny: ny, ..d }
    }

    pub fn dx(&self) -> f64 {
        self.length_m / self.grid_nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.width_m / self.grid_ny as f64
    }

    /// Largest step with `c·dt/Δ ≤ 1/√2` on the finer axis.
    pub fn max_stable_dt(&self) -> f64 {
        self.dx().min(self.dy()) / (self.wave_speed_mps * std::f64::consts::SQRT_2)
    }

    pub fn dt(&self) -> f64 {
        self.dt_s.unwrap_or_else(|| (0.9 * self.max_stable_dt()).min(1.0 / (SAMPLES_PER_DRIVE_CYCLE * MAX_DRIVE_HZ)))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("length_m", self.length_m),
            ("width_m", self.width_m),
            ("depth_m", self.depth_m),
            ("wave_speed_mps", self.wave_speed_mps),
            ("source_radius_m", self.source_radius_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.damping_per_s >= 0.0) || !self.damping_per_s.is_finite() {
            return Err(Error::config(format!("damping_per_s must be >= 0, got {}", self.damping_per_s)));
        }
        if !self.forcing_gain.is_finite() {
            return Err(Error::config("forcing_gain must be finite"));
        }
        if self.grid_nx < 3 || self.grid_ny < 3 {
            return Err(Error::config("grid must be at least 3 × 3"));
        }
        let aspect = self.dx() / self.dy();
        if !(0.9..=1.1).contains(&aspect) {
            return Err(Error::config(format!(
                "grid spacing must be near-isotropic: dx = {:.5} m, dy = {:.5} m",
                self.dx(),
                self.dy()
            )));
        }
        if self.source_positions.len() != 6 {
            return Err(Error::config(format!("expected 6 sources, got {}", self.source_positions.len())));
        }
        for (k, [x, y]) in self.source_positions.iter().enumerate() {
            if !(0.0..=self.length_m).contains(x) || !(0.0..=self.width_m).contains(y) {
                return Err(Error::config(format!("source {} at ({x}, {y}) lies outside the tank", k + 1)));
            }
        }
        let dt = self.dt();
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::config(format!("time step must be positive, got {dt}")));
        }
        let max_dt = self.max_stable_dt();
        if dt > max_dt * (1.0 + 1e-12) {
            return Err(Error::config(format!(
                "CFL violated: dt = {dt:.3e} s exceeds the stable maximum {max_dt:.3e} s"
            )));
        }
        Ok(())
    }
}
