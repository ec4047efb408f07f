//! Line-delimited utterance manifests.
//!
//! One JSON object per line with fields `id`, `language`, exactly one of
//! `features` (a feature-file path) or `audio` (a WAV path), and optional
//! `lat`/`lon`/`text`. Unknown fields are rejected so typos cannot pass
//! silently, and all errors carry 1-based line numbers.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{io_err, MasrError, Result};

/// One utterance: where its features come from and what we know about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub language: String,
    /// Path to a feature file, relative to the manifest's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<String>,
    /// Path to a PCM16 mono WAV, relative to the manifest's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl ManifestRecord {
    /// Field-level checks shared by loading and synthesis.
    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.language.is_empty() {
            return Err(format!("record {}: empty language", self.id));
        }
        match (&self.features, &self.audio) {
            (None, None) => {
                return Err(format!("record {}: neither features nor audio given", self.id))
            }
            (Some(_), Some(_)) => {
                return Err(format!("record {}: both features and audio given", self.id))
            }
            _ => {}
        }
        match (self.lat, self.lon) {
            (None, None) => {}
            (Some(lat), Some(lon)) => {
                if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
                    return Err(format!("record {}: lat {lat} out of [-90, 90]", self.id));
                }
                if !lon.is_finite() || lon <= -180.0 || lon > 180.0 {
                    return Err(format!("record {}: lon {lon} out of (-180, 180]", self.id));
                }
            }
            _ => return Err(format!("record {}: lat and lon must come together", self.id)),
        }
        Ok(())
    }
}

/// Parse and validate a whole manifest file.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    let mut seen_ids = BTreeSet::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord = serde_json::from_str(line).map_err(|e| {
            MasrError::Parse { path: path.into(), line: lineno, message: e.to_string() }
        })?;
        record.validate().map_err(|message| MasrError::Parse {
            path: path.into(),
            line: lineno,
            message,
        })?;
        if !seen_ids.insert(record.id.clone()) {
            return Err(MasrError::Parse {
                path: path.into(),
                line: lineno,
                message: format!("duplicate id {}", record.id),
            });
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(MasrError::Parse {
            path: path.into(),
            line: 0,
            message: "manifest has no records".into(),
        });
    }
    Ok(records)
}

/// Serialize records one JSON object per line.
pub fn save_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        r.validate().map_err(|message| MasrError::Parse {
            path: path.into(),
            line: 0,
            message,
        })?;
        out.push_str(&serde_json::to_string(r).expect("manifest record serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))?;
    Ok(())
}

/// Resolve a source path stored in a record against the manifest's
/// directory.
pub fn resolve_source(manifest_path: &Path, source: &str) -> PathBuf {
    let p = Path::new(source);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest_path.parent().unwrap_or(Path::new(".")).join(p)
    }
}
