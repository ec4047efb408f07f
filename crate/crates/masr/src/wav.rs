//! PCM16 mono WAV ingestion.
//!
//! Decoding is delegated to `hound`; this wrapper enforces the narrow
//! contract the pipeline supports — 16-bit integer PCM, one channel —
//! and scales samples by 1/32768 so the int16 range maps onto
//! [-1.0, 32767/32768].

use std::path::Path;

use crate::error::{MasrError, Result};

/// Read a WAV file into f64 samples plus its sample rate.
pub fn read_wav(path: &Path) -> Result<(Vec<f64>, u32)> {
    let audio_err = |message: String| MasrError::Audio { path: path.into(), message };
    let reader = hound::WavReader::open(path).map_err(|e| audio_err(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(audio_err(format!("{} channels, only mono supported", spec.channels)));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(audio_err(format!(
            "{:?} {}-bit, only 16-bit integer PCM supported",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let samples: std::result::Result<Vec<i16>, _> = reader.into_samples().collect();
    let samples = samples.map_err(|e| audio_err(e.to_string()))?;
    Ok((samples.iter().map(|&s| s as f64 / 32768.0).collect(), spec.sample_rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_wav(path: &Path, channels: u16, samples: &[i16]) {
        let spec = hound::WavSpec {
            channels,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(path, spec).unwrap();
        for &s in samples {
            writer.write_sample(s).unwrap();
        }
        writer.finalize().unwrap();
    }

    #[test]
    fn ten_sample_file_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let samples: Vec<i16> = (0..10).map(|i| i * 100).collect();
        write_wav(&path, 1, &samples);
        let (read, rate) = read_wav(&path).unwrap();
        assert_eq!(rate, 16000);
        assert_eq!(read.len(), 10);
    }

    #[test]
    fn int16_extremes_scale_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        write_wav(&path, 1, &[i16::MIN, 0, i16::MAX]);
        let (read, _) = read_wav(&path).unwrap();
        assert_eq!(read, vec![-1.0, 0.0, 32767.0 / 32768.0]);
    }

    #[test]
    fn stereo_rejected_naming_channel_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        write_wav(&path, 2, &[0, 0, 1, 1]);
        match read_wav(&path) {
            Err(MasrError::Audio { message, .. }) => {
                assert!(message.contains('2'), "{message}");
            }
            other => panic!("expected audio error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        std::fs::write(&path, b"RIFFgarbage").unwrap();
        assert!(matches!(read_wav(&path), Err(MasrError::Audio { .. })));
    }
}
