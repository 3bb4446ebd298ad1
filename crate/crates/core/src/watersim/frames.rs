use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sim::SimState;
use crate::error::{Error, Result};

pub const WWF_MAGIC: &[u8; 4] = b"WWF1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    /// Row-major heightfield snapshot in metres.
    pub data: Vec<f32>,
    pub min: f32,
    pub max: f32,
}

impl Frame {
    pub fn new(t: f64, data: Vec<f32>) -> Self {
        let (min, max) = min_max(&data);
        Self { t, data, min, max }
    }

    pub fn rms(&self) -> f64 {
        let n = self.data.len().max(1) as f64;
        (self.data.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / n).sqrt()
    }
}

fn min_max(data: &[f32]) -> (f32, f32) {
    data.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSequence {
    pub nx: usize,
    pub ny: usize,
    pub frame_rate: u32,
    pub frames: Vec<Frame>,
}

/// Snapshots a running simulation at a fixed frame rate, choosing the step
/// nearest each frame time.
#[derive(Debug, Clone)]
pub struct FrameRecorder {
    seq: FrameSequence,
    next_index: u64,
    half_step: f64,
    last_t: Option<f64>,
}

impl FrameRecorder {
    pub fn new(nx: usize, ny: usize, frame_rate: u32, dt: f64) -> Self {
        Self { seq: FrameSequence { nx, ny, frame_rate, frames: Vec::new() }, next_index: 0, half_step: 0.5 * dt, last_t: None }
    }

    /// Records nothing, for runs where only the final state matters.
    pub fn disabled(nx: usize, ny: usize) -> Self {
        Self { seq: FrameSequence { nx, ny, frame_rate: 0, frames: Vec::new() }, next_index: u64::MAX, half_step: 0.0, last_t: None }
    }

    pub fn observe(&mut self, state: &SimState) {
        if self.seq.frame_rate == 0 {
            return;
        }
        let due = self.next_index as f64 / self.seq.frame_rate as f64;
        if state.t + self.half_step < due {
            return;
        }
        if self.last_t.is_some_and(|t| t >= state.t) {
            return;
        }
        self.last_t = Some(state.t);
        self.seq.frames.push(Frame::new(state.t, state.h_now.iter().map(|&h| h as f32).collect()));
        // Skip frame slots this step already covers.
        self.next_index = (((state.t + self.half_step) * self.seq.frame_rate as f64).floor() as u64 + 1).max(self.next_index + 1);
    }

    pub fn frames(&self) -> &[Frame] {
        &self.seq.frames
    }

    /// Hands over the frames recorded so far; recording carries on.
    pub fn drain(&mut self) -> Vec<Frame> {
        std::mem::take(&mut self.seq.frames)
    }

    pub fn finish(self) -> FrameSequence {
        self.seq
    }
}

/// Writes the binary frame file: `WWF1`, then nx, ny, frame rate and frame
/// count as little-endian u32, then each frame as row-major little-endian f32.
pub fn write_wwf(path: impl AsRef<Path>, seq: &FrameSequence) -> Result<()> {
    let mut w = WwfWriter::create(path, seq.nx, seq.ny, seq.frame_rate)?;
    for frame in &seq.frames {
        w.push(frame)?;
    }
    w.finish()?;
    Ok(())
}

/// Incremental frame-file writer; the frame count in the header is patched
/// on `finish`.
#[derive(Debug)]
pub struct WwfWriter {
    w: BufWriter<File>,
    nx: usize,
    ny: usize,
    count: u32,
}

impl WwfWriter {
    pub fn create(path: impl AsRef<Path>, nx: usize, ny: usize, frame_rate: u32) -> Result<Self> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(WWF_MAGIC)?;
        for v in [nx as u32, ny as u32, frame_rate, 0] {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(Self { w, nx, ny, count: 0 })
    }

    pub fn push(&mut self, frame: &Frame) -> Result<()> {
        if frame.data.len() != self.nx * self.ny {
            return Err(Error::input("frame size does not match the grid"));
        }
        for v in &frame.data {
            self.w.write_all(&v.to_le_bytes())?;
        }
        self.count += 1;
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn count(&self) -> u32 {
        self.count
    }

    /// Writes out buffered frames and patches the header count, leaving a
    /// valid file on disk; writing can continue afterwards.
    pub fn flush(&mut self) -> Result<()> {
        self.w.flush()?;
        let file = self.w.get_mut();
        let end = file.stream_position()?;
        file.seek(SeekFrom::Start(16))?;
        file.write_all(&self.count.to_le_bytes())?;
        file.seek(SeekFrom::Start(end))?;
        file.flush()?;
        Ok(())
    }

    /// Flushes and closes. Returns the number of frames.
    pub fn finish(mut self) -> Result<u32> {
        self.flush()?;
        Ok(self.count)
    }
}

/// Reads a frame file. Timestamps are reconstructed as `index / frame_rate`.
pub fn read_wwf(path: impl AsRef<Path>) -> Result<FrameSequence> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != WWF_MAGIC {
        return Err(Error::input("not a WWF1 frame file"));
    }
    let mut word = [0u8; 4];
    let mut header = [0u32; 4];
    for h in &mut header {
        r.read_exact(&mut word)?;
        *h = u32::from_le_bytes(word);
    }
    let [nx, ny, frame_rate, count] = header.map(|v| v as usize);
    let mut frames = Vec::with_capacity(count);
    for index in 0..count {
        let mut data = vec![0f32; nx * ny];
        for v in &mut data {
            r.read_exact(&mut word)?;
            *v = f32::from_le_bytes(word);
        }
        let t = if frame_rate > 0 { index as f64 / frame_rate as f64 } else { 0.0 };
        frames.push(Frame::new(t, data));
    }
    Ok(FrameSequence { nx, ny, frame_rate: frame_rate as u32, frames })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Maps `[min, max]` linearly onto `0..=255`; a constant field is mid-grey.
pub fn render_frame(field: &[f32], nx: usize, ny: usize) -> GrayImage {
    let (min, max) = min_max(field);
    let span = max - min;
    let pixels = field
        .iter()
        .map(|&v| {
            if !(span > 0.0) {
                128
            } else {
                (((v - min) / span) * 255.0).round().clamp(0.0, 255.0) as u8
            }
        })
        .collect();
    GrayImage { width: nx, height: ny, pixels }
}

pub fn write_png(path: impl AsRef<Path>, image: &GrayImage) -> Result<()> {
    let file = BufWriter::new(std::fs::File::create(path)?);
    let mut encoder = png::Encoder::new(file, image.width as u32, image.height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header()?;
    writer.write_image_data(&image.pixels)?;
    writer.finish()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_is_mid_grey() {
        let img = render_frame(&[0.0; 12], 4, 3);
        assert!(img.pixels.iter().all(|&p| p == 128));
    }

    #[test]
    fn single_max_cell_is_white() {
        let mut field = vec![0.0f32; 12];
        field[7] = 2.5e-4;
        let img = render_frame(&field, 4, 3);
        assert_eq!(img.pixels[7], 255);
        assert_eq!(img.pixels.iter().filter(|&&p| p == 255).count(), 1);
        assert_eq!(img.pixels[0], 0);
    }

    #[test]
    fn pixels_invert_through_stored_range() {
        let field: Vec<f32> = (0..100).map(|i| ((i as f32) * 0.37).sin() * 1e-3).collect();
        let frame = Frame::new(0.0, field.clone());
        let img = render_frame(&field, 10, 10);
        let step = (frame.max - frame.min) / 255.0;
        for (p, v) in img.pixels.iter().zip(&field) {
            let back = frame.min + *p as f32 * step;
            assert!((back - v).abs() <= 0.5 * step + 1e-9);
        }
    }

    #[test]
    fn recorder_keeps_timestamps_increasing() {
        let mut rec = FrameRecorder::new(2, 2, 30, 0.01);
        let mut state = SimState::zeros(2, 2);
        for _ in 0..100 {
            rec.observe(&state);
            state.t += 0.01;
        }
        let frames = rec.finish().frames;
        assert_eq!(frames.len(), 30);
        assert!(frames.windows(2).all(|w| w[0].t < w[1].t));
    }

    #[test]
    fn wwf_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frames.wwf");
        let seq = FrameSequence {
            nx: 3,
            ny: 2,
            frame_rate: 10,
            frames: vec![Frame::new(0.0, vec![0.0; 6]), Frame::new(0.1, vec![1.0, -2.0, 3.0, 0.5, 0.25, -0.125])],
        };
        write_wwf(&path, &seq).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"WWF1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 3);
        assert_eq!(bytes.len(), 4 + 16 + 2 * 6 * 4);
        assert_eq!(read_wwf(&path).unwrap(), seq);
    }

    #[test]
    fn drained_recording_matches_whole() {
        let state_at = |t: f64| SimState { nx: 1, ny: 1, h_now: vec![t], h_prev: vec![0.0], t };
        let dt = 1e-3;
        let mut whole = FrameRecorder::new(1, 1, 20, dt);
        let mut parts = FrameRecorder::new(1, 1, 20, dt);
        let mut drained = Vec::new();
        for i in 0..1000 {
            let s = state_at(i as f64 * dt);
            whole.observe(&s);
            parts.observe(&s);
            if i % 97 == 0 {
                drained.extend(parts.drain());
            }
        }
        drained.extend(parts.drain());
        assert_eq!(drained, whole.finish().frames);
    }

    #[test]
    fn incremental_writer_patches_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frames.wwf");
        let mut w = WwfWriter::create(&path, 2, 1, 5).unwrap();
        for i in 0..3 {
            w.push(&Frame::new(i as f64 / 5.0, vec![i as f32, -(i as f32)])).unwrap();
        }
        assert!(w.push(&Frame::new(1.0, vec![0.0])).is_err());
        w.flush().unwrap();
        assert_eq!(read_wwf(&path).unwrap().frames.len(), 3);
        w.push(&Frame::new(0.6, vec![3.0, -3.0])).unwrap();
        assert_eq!(w.finish().unwrap(), 4);
        let seq = read_wwf(&path).unwrap();
        assert_eq!(seq.frames.len(), 4);
        assert_eq!(seq.frames[2].data, vec![2.0, -2.0]);
    }
}
