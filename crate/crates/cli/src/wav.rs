//! WAV input/output through `hound`. Files are written as mono 16-bit PCM.

use std::io::BufWriter;
use std::path::Path;

use dagmm_ho_core::features::AudioClip;

use crate::error::{CliError, Result};
use crate::persist::write_atomic;

/// Reads a WAV file; multi-channel audio is averaged to mono.
pub fn load_wav(path: &Path) -> Result<AudioClip> {
    let bad = |e: hound::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut reader = hound::WavReader::open(path).map_err(bad)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(bad)?,
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
                .map_err(bad)?
        }
    };
    let samples = interleaved
        .chunks(channels)
        .map(|c| c.iter().sum::<f64>() / channels as f64)
        .collect();
    Ok(AudioClip::new(samples, spec.sample_rate)?)
}

/// Writes `clip` as 16-bit PCM, replacing `path` atomically.
pub fn save_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    write_atomic(path, |file| {
        let mut w = hound::WavWriter::new(BufWriter::new(file), spec)
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        for &s in &clip.samples {
            let v = (s.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16;
            w.write_sample(v)
                .map_err(|e| std::io::Error::other(e.to_string()))?;
        }
        w.finalize()
            .map_err(|e| std::io::Error::other(e.to_string()))
    })
}
