//! 16-bit PCM WAV export/import for debugging (16 kHz, little-endian).

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::dsp::SAMPLE_RATE;
use crate::error::{invalid, Result};

fn spec(channels: u16) -> WavSpec {
    WavSpec { channels, sample_rate: SAMPLE_RATE, bits_per_sample: 16, sample_format: SampleFormat::Int }
}

fn quantize(v: f64) -> i16 {
    (v * i16::MAX as f64).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Writes interleaved channels. Samples are clipped to [-1, 1].
pub fn write_wav(path: impl AsRef<Path>, channels: &[&[f64]]) -> Result<()> {
    let Some(first) = channels.first() else {
        return invalid("no channels to write");
    };
    if channels.iter().any(|c| c.len() != first.len()) {
        return invalid("channels differ in length");
    }
    let mut writer = WavWriter::create(path, spec(channels.len() as u16))?;
    for i in 0..first.len() {
        for c in channels {
            writer.write_sample(quantize(c[i]))?;
        }
    }
    writer.finalize()?;
    Ok(())
}

/// Reads a 16-bit PCM WAV at 16 kHz, de-interleaved and scaled to [-1, 1).
pub fn read_wav(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let mut reader = WavReader::open(path)?;
    let s = reader.spec();
    if s.sample_rate != SAMPLE_RATE || s.bits_per_sample != 16 || s.sample_format != SampleFormat::Int {
        return invalid(format!("unsupported wav format {s:?}"));
    }
    let n = s.channels as usize;
    let mut out = vec![Vec::new(); n];
    for (i, v) in reader.samples::<i16>().enumerate() {
        out[i % n].push(v? as f64 / i16::MAX as f64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_channel_round_trip_within_quantization() {
        let dir = std::env::temp_dir().join(format!("spkcount-wav-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("foa.wav");
        let chans: Vec<Vec<f64>> =
            (0..4).map(|c| (0..100).map(|i| ((i + c) as f64 * 0.1).sin() * 0.5).collect()).collect();
        let refs: Vec<&[f64]> = chans.iter().map(|c| c.as_slice()).collect();
        write_wav(&path, &refs).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.len(), 4);
        for (a, b) in chans.iter().zip(&back) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1.0 / i16::MAX as f64);
            }
        }
        std::fs::remove_dir_all(dir).ok();
    }
}
