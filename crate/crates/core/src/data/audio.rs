//! Mono 16-bit PCM WAV input and output.

use std::path::Path;

use crate::error::{Error, Result};
use crate::features::Waveform;

const SCALE: f64 = 32768.0;

fn format_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        detail: detail.into(),
    }
}

fn hound_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => format_err(path, other.to_string()),
    }
}

/// Reads a mono 16-bit PCM file, scaling samples by 1/32768.
pub fn read_audio(path: &Path) -> Result<Waveform> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    // reads from memory only fail on malformed or truncated content
    let parse_err = |e: hound::Error| format_err(path, e.to_string());
    let mut reader = hound::WavReader::new(std::io::Cursor::new(bytes)).map_err(parse_err)?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(format_err(path, "sample_format: expected integer PCM"));
    }
    if spec.bits_per_sample != 16 {
        return Err(format_err(
            path,
            format!("bits_per_sample: expected 16, got {}", spec.bits_per_sample),
        ));
    }
    if spec.channels != 1 {
        return Err(format_err(
            path,
            format!("channels: expected 1, got {}", spec.channels),
        ));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(parse_err)?;
    Waveform::new(samples, spec.sample_rate).map_err(|e| format_err(path, e.to_string()))
}

/// Writes samples as mono 16-bit PCM, rounding and saturating to the i16 range.
pub fn write_audio(path: &Path, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| hound_err(path, e))?;
    for &s in &w.samples {
        let v = (s * SCALE)
            .round()
            .clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16;
        writer.write_sample(v).map_err(|e| hound_err(path, e))?;
    }
    writer.finalize().map_err(|e| hound_err(path, e))
}
