//! Mono WAV reading and writing via `hound`.

use crate::error::{RebandError, Result};
use std::path::Path;

/// Read a WAV file as mono `f64` samples in [-1, 1], averaging channels.
pub fn read_wav_mono(path: &Path) -> Result<(Vec<f64>, u32)> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let ch = spec.channels as usize;
    if ch == 0 {
        return Err(RebandError::Data(format!("{}: zero channels", path.display())));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()?,
        (hound::SampleFormat::Int, bits) if bits <= 32 => {
            let scale = f64::from((1u32 << (bits - 1)) as u32);
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
        (fmt, bits) => {
            return Err(RebandError::Data(format!(
                "{}: unsupported sample format {fmt:?}/{bits}",
                path.display()
            )))
        }
    };
    let frames = interleaved.len() / ch;
    let mono: Vec<f64> = (0..frames)
        .map(|i| interleaved[i * ch..(i + 1) * ch].iter().sum::<f64>() / ch as f64)
        .collect();
    Ok((mono, spec.sample_rate))
}

/// Write mono 16-bit PCM. Samples are clamped to [-1, 1).
pub fn write_wav_mono16(path: &Path, x: &[f64], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for v in x {
        let q = (v.clamp(-1.0, 32767.0 / 32768.0) * 32768.0).round() as i32;
        writer.write_sample(q.clamp(-32768, 32767) as i16)?;
    }
    writer.finalize()?;
    Ok(())
}
