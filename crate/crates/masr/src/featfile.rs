//! Per-utterance feature files.
//!
//! Flat binary: magic `MASRFEAT`, version u32, frame count T u32, mel
//! bins F u32, then T*F little-endian f32 values frame-major. Values are
//! stored f32 — reading one back gives exactly `f32 as f64`, and writing
//! that again is byte-stable.

use std::fs;
use std::path::Path;

use masr_core::FeatureMatrix;

use crate::error::{io_err, MasrError, Result};

pub const FEAT_MAGIC: &[u8; 8] = b"MASRFEAT";
pub const FEAT_VERSION: u32 = 1;

/// Serialize features to the flat binary layout.
pub fn write_features(path: &Path, features: &FeatureMatrix) -> Result<()> {
    let t = features.frames() as u32;
    let f = features.mel_bins() as u32;
    let mut bytes = Vec::with_capacity(20 + features.data().len() * 4);
    bytes.extend_from_slice(FEAT_MAGIC);
    bytes.extend_from_slice(&FEAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&t.to_le_bytes());
    bytes.extend_from_slice(&f.to_le_bytes());
    for &v in features.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(io_err(path))?;
    Ok(())
}

/// Load a feature file, validating magic, version, and exact length.
pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let fail = |message: String| MasrError::Format { path: path.into(), message };
    if bytes.len() < 20 {
        return Err(fail(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[0..8] != FEAT_MAGIC {
        return Err(fail("wrong magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FEAT_VERSION {
        return Err(fail(format!("version {version}, expected {FEAT_VERSION}")));
    }
    let t = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let f = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    let expected = 20 + t * f * 4;
    if bytes.len() != expected {
        return Err(fail(format!("{} bytes, expected {expected} for {t}x{f}", bytes.len())));
    }
    let mut data = Vec::with_capacity(t * f);
    for chunk in bytes[20..].chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
    }
    FeatureMatrix::from_vec(t, f, data).map_err(MasrError::Core)
}
