//! In-memory corpus: manifest records joined with their features and
//! per-stream metadata encodings.
//!
//! Loading resolves each record's source (feature file or WAV through the
//! log-mel front end), applies the fixed metadata encoders declared in
//! the config streams, and assigns stream-local label ids — language ids
//! from the shared language list, geolocation ids by exact coordinate,
//! transcript ids by exact string. Records missing a stream's metadata
//! get an explicit absent marker so mining can exclude them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use masr_core::features::logmel;
use masr_core::metadata::{encode_geo, geo_key, CharTable, LangVecCategory, LangVecTable};
use masr_core::rng::derive_seed;
use masr_core::step::StreamDatum;
use masr_core::synth::{language_name, langvec_fixture, synthesize};
use masr_core::{CoreError, FeatureMatrix};

use crate::config::{FeaturesSection, RunConfig, StreamSection};
use crate::error::{io_err, MasrError, Result};
use crate::featfile::{read_features, write_features};
use crate::manifest::{load_manifest, resolve_source, save_manifest, ManifestRecord};
use crate::wav::read_wav;

/// Dimension of generated language-vector fixture tables.
pub const FIXTURE_LANGVEC_DIM: usize = 8;

/// One loaded utterance.
#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub id: String,
    /// Index into [`Corpus::languages`].
    pub language: usize,
    pub features: FeatureMatrix,
    /// Aligned with the config's stream list.
    pub streams: Vec<StreamDatum>,
}

/// Everything training and probing need, fully resident.
#[derive(Debug, Clone)]
pub struct Corpus {
    /// Sorted distinct language labels; item.language indexes this.
    pub languages: Vec<String>,
    pub stream_names: Vec<String>,
    pub items: Vec<CorpusItem>,
}

impl Corpus {
    /// Language label ids in corpus order, as the batch planner wants.
    pub fn language_labels(&self) -> Vec<usize> {
        self.items.iter().map(|item| item.language).collect()
    }
}

/// The fixed per-stream encoders, reconstructible from (config, seed).
enum StreamEncoder {
    LangVec(LangVecTable),
    Geo,
    Text(CharTable),
}

fn build_encoder(
    stream: &StreamSection,
    index: usize,
    manifest_dir: &Path,
    seed: u64,
) -> Result<StreamEncoder> {
    match stream.kind.as_str() {
        "langvec" => {
            let rel = stream.table.as_deref().ok_or_else(|| {
                MasrError::Config(vec![format!(
                    "streams[{index}].table required for kind \"langvec\""
                )])
            })?;
            let path = if Path::new(rel).is_absolute() {
                PathBuf::from(rel)
            } else {
                manifest_dir.join(rel)
            };
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            let category = LangVecCategory::from_name(&stream.category)
                .expect("category validated with the config");
            let table = LangVecTable::parse(&text, category).map_err(|e| match e {
                CoreError::Parse { line, message } => {
                    MasrError::Parse { path: path.clone(), line, message }
                }
                other => MasrError::Core(other),
            })?;
            Ok(StreamEncoder::LangVec(table))
        }
        "geo" => Ok(StreamEncoder::Geo),
        "text" => Ok(StreamEncoder::Text(CharTable::generate(
            derive_seed(seed, "chartable", index as u64),
            stream.d_e,
        ))),
        other => Err(MasrError::Config(vec![format!(
            "streams[{index}].kind = {other:?} unknown"
        )])),
    }
}

/// Label-id assignment helper: dense ids in first-seen order is fine for
/// mining (only equality matters), but a BTreeMap keyed on the raw label
/// keeps ids independent of record order.
struct LabelSpace<K: Ord>(BTreeMap<K, usize>);

impl<K: Ord> LabelSpace<K> {
    fn new() -> Self {
        LabelSpace(BTreeMap::new())
    }
    fn id(&mut self, key: K) -> usize {
        let next = self.0.len();
        *self.0.entry(key).or_insert(next)
    }
}

fn load_item_features(
    record: &ManifestRecord,
    manifest_path: &Path,
    features_cfg: &FeaturesSection,
) -> Result<FeatureMatrix> {
    let features = if let Some(src) = &record.features {
        read_features(&resolve_source(manifest_path, src))?
    } else {
        let src = record.audio.as_deref().expect("manifest validation");
        let path = resolve_source(manifest_path, src);
        let (samples, rate) = read_wav(&path)?;
        let cfg = masr_core::features::LogMelConfig {
            frame_ms: features_cfg.frame_ms,
            hop_ms: features_cfg.hop_ms,
            mel_bins: features_cfg.mel_bins,
            floor: features_cfg.floor,
        };
        logmel(&samples, rate, &cfg)?
    };
    if features.mel_bins() != features_cfg.mel_bins {
        return Err(MasrError::Format {
            path: manifest_path.into(),
            message: format!(
                "record {}: {} mel bins, config says {}",
                record.id,
                features.mel_bins(),
                features_cfg.mel_bins
            ),
        });
    }
    Ok(features)
}

/// Load and encode a manifest under a config.
pub fn load_corpus(manifest_path: &Path, config: &RunConfig) -> Result<Corpus> {
    let records = load_manifest(manifest_path)?;
    let manifest_dir = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();

    let mut languages: Vec<String> =
        records.iter().map(|r| r.language.clone()).collect();
    languages.sort();
    languages.dedup();
    let language_id: BTreeMap<&str, usize> =
        languages.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();

    let encoders: Vec<StreamEncoder> = config
        .streams
        .iter()
        .enumerate()
        .map(|(j, s)| build_encoder(s, j, &manifest_dir, config.training.seed))
        .collect::<Result<_>>()?;

    let mut geo_labels = LabelSpace::new();
    let mut text_labels = LabelSpace::new();
    let mut items = Vec::with_capacity(records.len());
    for record in &records {
        let features = load_item_features(record, manifest_path, &config.features)?;
        let mut streams = Vec::with_capacity(encoders.len());
        for encoder in &encoders {
            let datum = match encoder {
                StreamEncoder::LangVec(table) => match table.encode(&record.language) {
                    Some(e) => StreamDatum::present(language_id[record.language.as_str()], e),
                    None => StreamDatum::absent(),
                },
                StreamEncoder::Geo => match (record.lat, record.lon) {
                    (Some(lat), Some(lon)) => {
                        let e = encode_geo(lat, lon)?;
                        StreamDatum::present(geo_labels.id(geo_key(lat, lon)), e.to_vec())
                    }
                    _ => StreamDatum::absent(),
                },
                StreamEncoder::Text(table) => match &record.text {
                    Some(text) => match table.encode(text) {
                        Some(e) => StreamDatum::present(text_labels.id(text.clone()), e),
                        None => StreamDatum::absent(),
                    },
                    None => StreamDatum::absent(),
                },
            };
            streams.push(datum);
        }
        items.push(CorpusItem {
            id: record.id.clone(),
            language: language_id[record.language.as_str()],
            features,
            streams,
        });
    }
    Ok(Corpus {
        languages,
        stream_names: config.streams.iter().map(|s| s.name.clone()).collect(),
        items,
    })
}

/// Generate the synthetic corpus into `out`: feature files under
/// `features/`, `manifest.jsonl`, and a language-vector fixture table
/// `langvec.tsv` whose pair similarities mirror the confusable pairs.
/// Returns the manifest path.
pub fn synthesize_to_dir(config: &RunConfig, out: &Path) -> Result<PathBuf> {
    let spec = config.synth_spec();
    spec.validate()?;
    let utterances = synthesize(&spec)?;

    let features_dir = out.join("features");
    fs::create_dir_all(&features_dir).map_err(io_err(&features_dir))?;

    let mut records = Vec::with_capacity(utterances.len());
    for utt in &utterances {
        let lang = language_name(utt.language);
        let file = format!("{lang}_{:03}.feat", utt.index);
        write_features(&features_dir.join(&file), &utt.features)?;
        records.push(ManifestRecord {
            id: format!("{lang}_{:03}", utt.index),
            language: lang,
            features: Some(format!("features/{file}")),
            audio: None,
            lat: None,
            lon: None,
            text: None,
        });
    }

    let manifest_path = out.join("manifest.jsonl");
    save_manifest(&manifest_path, &records)?;

    let table = langvec_fixture(&spec, FIXTURE_LANGVEC_DIM)?;
    let table_path = out.join("langvec.tsv");
    fs::write(&table_path, table).map_err(io_err(&table_path))?;
    Ok(manifest_path)
}
