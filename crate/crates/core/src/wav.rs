//! WAV ingestion and emission (interleaved PCM16 or float32, any channel count).

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::MultiChannelWave;

const PCM16_SCALE: f64 = 32767.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WavFormat {
    Pcm16,
    #[default]
    Float32,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<MultiChannelWave> {
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::InvalidWave("zero channels".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| (v as f64 / PCM16_SCALE).max(-1.0)))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        (format, bits) => {
            return Err(Error::InvalidWave(format!(
                "unsupported sample format {format:?}/{bits} bits"
            )))
        }
    };
    let frames = interleaved.len() / channels;
    let mut out = vec![Vec::with_capacity(frames); channels];
    for frame in interleaved.chunks_exact(channels) {
        for (c, v) in out.iter_mut().zip(frame) {
            c.push(*v);
        }
    }
    MultiChannelWave::new(out, spec.sample_rate)
}

/// Reads a WAV file and rejects it unless it matches `expected_rate`.
pub fn read_wav_at(path: impl AsRef<Path>, expected_rate: u32) -> Result<MultiChannelWave> {
    let wave = read_wav(path)?;
    if wave.sample_rate() != expected_rate {
        return Err(Error::SampleRateMismatch {
            expected: expected_rate,
            actual: wave.sample_rate(),
        });
    }
    Ok(wave)
}

pub fn write_wav(path: impl AsRef<Path>, wave: &MultiChannelWave, format: WavFormat) -> Result<()> {
    let spec = WavSpec {
        channels: wave.channel_count() as u16,
        sample_rate: wave.sample_rate(),
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => SampleFormat::Int,
            WavFormat::Float32 => SampleFormat::Float,
        },
    };
    let mut writer = WavWriter::create(path, spec)?;
    for t in 0..wave.len() {
        for c in wave.channels() {
            match format {
                WavFormat::Pcm16 => {
                    let v = (c[t].clamp(-1.0, 1.0) * PCM16_SCALE).round() as i16;
                    writer.write_sample(v)?;
                }
                WavFormat::Float32 => writer.write_sample(c[t] as f32)?,
            }
        }
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave() -> MultiChannelWave {
        let chans = (0..3)
            .map(|c| {
                (0..1000)
                    .map(|t| ((t * (c + 1)) as f64 * 0.01).sin() * 0.9)
                    .collect()
            })
            .collect();
        MultiChannelWave::new(chans, 16_000).unwrap()
    }

    #[test]
    fn float32_round_trip_preserves_channels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let w = wave();
        write_wav(&path, &w, WavFormat::Float32).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.channel_count(), 3);
        assert_eq!(back.sample_rate(), 16_000);
        for c in 0..3 {
            for (a, b) in w.channel(c).iter().zip(back.channel(c)) {
                assert!((a - b).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn pcm16_is_symmetric() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.wav");
        let w = MultiChannelWave::mono(vec![1.0, -1.0, 0.5, 0.0], 8_000).unwrap();
        write_wav(&path, &w, WavFormat::Pcm16).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.channel(0)[0], 1.0);
        assert_eq!(back.channel(0)[1], -1.0);
        assert!((back.channel(0)[2] - 0.5).abs() < 1.0 / 32767.0);
    }

    #[test]
    fn sample_rate_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.wav");
        write_wav(&path, &wave(), WavFormat::Float32).unwrap();
        assert!(matches!(
            read_wav_at(&path, 48_000),
            Err(Error::SampleRateMismatch { .. })
        ));
    }
}
