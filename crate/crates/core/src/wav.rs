//! RIFF WAV reading and writing. Reads integer PCM or 32-bit float and keeps
//! only the first channel; writes mono PCM16 or float32.

use std::io::{Cursor, Read, Seek, Write};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let reader = WavReader::open(path)?;
    decode(reader)
}

pub fn read_wav_bytes(bytes: &[u8]) -> Result<AudioBuffer> {
    decode(WavReader::new(Cursor::new(bytes))?)
}

fn decode<R: Read>(reader: WavReader<R>) -> Result<AudioBuffer> {
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .step_by(channels)
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()?,
        (SampleFormat::Int, bits @ 1..=32) => {
            let full_scale = (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .step_by(channels)
                .map(|s| s.map(|v| v as f64 / full_scale))
                .collect::<Result<_, _>>()?
        }
        (format, bits) => {
            return Err(Error::input(format!("unsupported wav encoding {format:?}/{bits}")))
        }
    };
    AudioBuffer::new(samples, spec.sample_rate)
}

pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer, encoding: WavEncoding) -> Result<()> {
    let writer = WavWriter::create(path, spec_for(audio.sample_rate(), encoding))?;
    encode(writer, audio.samples(), encoding)
}

pub fn write_wav_samples(
    path: impl AsRef<Path>,
    samples: &[f64],
    sample_rate: u32,
    encoding: WavEncoding,
) -> Result<()> {
    let writer = WavWriter::create(path, spec_for(sample_rate, encoding))?;
    encode(writer, samples, encoding)
}

pub fn wav_bytes(audio: &AudioBuffer, encoding: WavEncoding) -> Result<Vec<u8>> {
    let mut cursor = Cursor::new(Vec::new());
    {
        let writer = WavWriter::new(&mut cursor, spec_for(audio.sample_rate(), encoding))?;
        encode(writer, audio.samples(), encoding)?;
    }
    Ok(cursor.into_inner())
}

fn spec_for(sample_rate: u32, encoding: WavEncoding) -> WavSpec {
    let (bits_per_sample, sample_format) = match encoding {
        WavEncoding::Pcm16 => (16, SampleFormat::Int),
        WavEncoding::Float32 => (32, SampleFormat::Float),
    };
    WavSpec { channels: 1, sample_rate, bits_per_sample, sample_format }
}

fn encode<W: Write + Seek>(mut writer: WavWriter<W>, samples: &[f64], encoding: WavEncoding) -> Result<()> {
    for &s in samples {
        match encoding {
            WavEncoding::Pcm16 => {
                let v = (s.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16;
                writer.write_sample(v)?;
            }
            WavEncoding::Float32 => writer.write_sample(s as f32)?,
        }
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm16_round_trip_within_quantization() {
        let audio = AudioBuffer::from_fn(0.1, 8000, |t| 0.5 * (2.0 * std::f64::consts::PI * 50.0 * t).sin());
        let bytes = wav_bytes(&audio, WavEncoding::Pcm16).unwrap();
        let back = read_wav_bytes(&bytes).unwrap();
        assert_eq!(back.sample_rate(), 8000);
        assert_eq!(back.len(), audio.len());
        for (a, b) in audio.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() < 1.0 / 16000.0);
        }
    }

    #[test]
    fn float_keeps_first_channel_of_stereo() {
        let mut cursor = Cursor::new(Vec::new());
        {
            let spec = WavSpec { channels: 2, sample_rate: 16000, bits_per_sample: 32, sample_format: SampleFormat::Float };
            let mut w = WavWriter::new(&mut cursor, spec).unwrap();
            for i in 0..10 {
                w.write_sample(i as f32 * 0.1).unwrap();
                w.write_sample(-1.0f32).unwrap();
            }
            w.finalize().unwrap();
        }
        let audio = read_wav_bytes(&cursor.into_inner()).unwrap();
        assert_eq!(audio.len(), 10);
        assert!((audio.samples()[3] - 0.3).abs() < 1e-6);
    }
}
