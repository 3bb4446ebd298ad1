//! Finite-difference model of the tank surface under six subwoofer drives.
//!
//! The surface obeys the damped linear wave equation
//! `h_tt + γ h_t = c² ∇²h + Σ_k F_k(t) G_k(x)`, discretized with leapfrog in
//! time, a five-point Laplacian and reflecting (zero normal derivative) walls.

mod frames;
mod sim;
mod tank;

pub use frames::{read_wwf, render_frame, write_png, write_wwf, Frame, FrameRecorder, FrameSequence, GrayImage, WwfWriter, WWF_MAGIC};
pub use sim::{run, SimState, WaterSim, BLOW_UP_THRESHOLD_M};
pub use tank::{depth_for_volume, TankConfig, GRAVITY, INCH, SUBWOOFER_SPACING_M, US_GALLON_M3};
