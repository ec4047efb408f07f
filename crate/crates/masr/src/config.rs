//! Run configuration: one TOML file holding every hyperparameter.
//!
//! Validation is two-pass so an operator sees all problems at once: a
//! schema walk collects every unknown key, then typed parsing and range
//! checks collect every value violation; the combined list comes back in
//! a single error. The config hash is computed from a canonical
//! serialization of the typed structure, so reordering keys in the file
//! does not change it.

use std::fs;
use std::path::Path;

use masr_core::batching::BalanceStrategy;
use masr_core::loss::StreamConfig;
use masr_core::metadata::LangVecCategory;
use masr_core::model::BackboneConfig;
use masr_core::optim::{AdamConfig, Precision};
use masr_core::synth::{ConfusablePair, SynthSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, MasrError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataSection,
    pub features: FeaturesSection,
    pub backbone: BackboneSection,
    pub streams: Vec<StreamSection>,
    pub training: TrainingSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataSection::default(),
            features: FeaturesSection::default(),
            backbone: BackboneSection::default(),
            streams: vec![StreamSection::default()],
            training: TrainingSection::default(),
            eval: EvalSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Manifest path; subcommands that need a corpus require it (or the
    /// `--manifest` flag, which overrides).
    pub manifest: Option<String>,
    pub synth: SynthSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub num_languages: usize,
    pub utterances_per_language: usize,
    pub frames: usize,
    pub noise: f64,
    pub confusable_pairs: Vec<PairSection>,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            num_languages: 8,
            utterances_per_language: 40,
            frames: 32,
            noise: 0.5,
            confusable_pairs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSection {
    pub a: usize,
    pub b: usize,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesSection {
    pub frame_ms: u32,
    pub hop_ms: u32,
    pub mel_bins: usize,
    pub floor: f64,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        FeaturesSection { frame_ms: 25, hop_ms: 10, mel_bins: 40, floor: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneSection {
    pub stack: usize,
    pub context: usize,
    pub blocks: usize,
    pub d_z: usize,
    pub codebook_size: usize,
    pub d_c: usize,
    pub mask_prob: f64,
    pub mask_span: usize,
}

impl Default for BackboneSection {
    fn default() -> Self {
        let d = BackboneConfig::default();
        BackboneSection {
            stack: d.stack,
            context: d.context,
            blocks: d.blocks,
            d_z: d.d_z,
            codebook_size: d.codebook_size,
            d_c: d.d_c,
            mask_prob: d.mask_prob,
            mask_span: d.mask_span,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StreamSection {
    pub name: String,
    /// Metadata source: "langvec", "geo", or "text".
    pub kind: String,
    /// Loss weight lambda; 0 keeps the stream as diagnostics only.
    pub weight: f64,
    /// Mining-concatenation scale alpha; 0 recovers projection-only mining.
    pub alpha: f64,
    /// Triplet margin gamma.
    pub margin: f64,
    /// Projection output dimension.
    pub d_q: usize,
    /// Ablation: measure the hinge on the mining vector p instead of q.
    pub loss_on_p: bool,
    /// langvec only: TSV table path.
    pub table: Option<String>,
    /// langvec only: feature category name.
    pub category: String,
    /// text only: transcript encoding dimension.
    pub d_e: usize,
}

impl Default for StreamSection {
    fn default() -> Self {
        StreamSection {
            name: "language".into(),
            kind: "langvec".into(),
            weight: 16.0,
            alpha: 1.0,
            margin: 0.5,
            d_q: 16,
            loss_on_p: false,
            table: None,
            category: "featural".into(),
            d_e: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub phase1_steps: usize,
    pub phase2_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Root seed; every random artifact derives from it.
    pub seed: u64,
    /// "f32" for training, "f64" for gradient verification.
    pub precision: String,
    /// Batch strategy: "label-balanced" or "shuffle".
    pub balance: String,
    /// Steps between checkpoint snapshots; 0 writes only the final one.
    pub checkpoint_every: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            phase1_steps: 2000,
            phase2_steps: 500,
            batch_size: 16,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            precision: "f32".into(),
            balance: "label-balanced".into(),
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Fraction of each class used to train the probe; the rest is test.
    pub train_fraction: f64,
    pub probe_seed: u64,
    /// Also write the confusion matrix as CSV.
    pub confusion_csv: bool,
    /// Languages counted as seen during pretraining, for the report's
    /// overlap/non-overlap accuracy split. Empty list: no overlap side.
    pub overlap_languages: Vec<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            train_fraction: 0.75,
            probe_seed: 0,
            confusion_csv: true,
            overlap_languages: Vec::new(),
        }
    }
}

/// Allowed keys per table, used by the unknown-key walk.
const SCHEMA: &[(&str, &[&str])] = &[
    ("", &["data", "features", "backbone", "streams", "training", "eval"]),
    ("data", &["manifest", "synth"]),
    (
        "data.synth",
        &["num_languages", "utterances_per_language", "frames", "noise", "confusable_pairs"],
    ),
    ("data.synth.confusable_pairs", &["a", "b", "epsilon"]),
    ("features", &["frame_ms", "hop_ms", "mel_bins", "floor"]),
    (
        "backbone",
        &["stack", "context", "blocks", "d_z", "codebook_size", "d_c", "mask_prob", "mask_span"],
    ),
    (
        "streams",
        &[
            "name", "kind", "weight", "alpha", "margin", "d_q", "loss_on_p", "table",
            "category", "d_e",
        ],
    ),
    (
        "training",
        &[
            "phase1_steps", "phase2_steps", "batch_size", "learning_rate", "beta1", "beta2",
            "epsilon", "seed", "precision", "balance", "checkpoint_every",
        ],
    ),
    ("eval", &["train_fraction", "probe_seed", "confusion_csv", "overlap_languages"]),
];

fn allowed_keys(path: &str) -> Option<&'static [&'static str]> {
    SCHEMA.iter().find(|(p, _)| *p == path).map(|(_, keys)| *keys)
}

/// Collect the dotted path of every key the schema does not know.
fn walk_unknown(value: &toml::Value, path: &str, unknown_keys: &mut Vec<String>) {
    let toml::Value::Table(table) = value else {
        return;
    };
    let Some(allowed) = allowed_keys(path) else {
        return;
    };
    for (key, child) in table {
        let child_path =
            if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
        if !allowed.contains(&key.as_str()) {
            unknown_keys.push(format!("unknown key {child_path}"));
            continue;
        }
        match child {
            toml::Value::Table(_) => walk_unknown(child, &child_path, unknown_keys),
            toml::Value::Array(items) => {
                for item in items {
                    if item.is_table() {
                        // Array-of-tables elements share the array's schema.
                        walk_unknown(item, &child_path, unknown_keys);
                    }
                }
            }
            _ => {}
        }
    }
}

impl RunConfig {
    /// Parse and fully validate a TOML config file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        RunConfig::parse(&text)
    }

    /// Parse and fully validate config text.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let value: toml::Value = text
            .parse()
            .map_err(|e: toml::de::Error| MasrError::Config(vec![e.message().to_string()]))?;
        let mut offenders = Vec::new();
        walk_unknown(&value, "", &mut offenders);
        if !offenders.is_empty() {
            offenders.sort();
            return Err(MasrError::Config(offenders));
        }
        let config: RunConfig = toml::from_str(text)
            .map_err(|e| MasrError::Config(vec![e.message().to_string()]))?;
        config.validate()?;
        Ok(config)
    }

    /// Range and cross-field checks; every violation is reported.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let t = &self.training;
        if t.batch_size < 2 {
            bad.push(format!("training.batch_size = {} (need >= 2)", t.batch_size));
        }
        if !(t.learning_rate > 0.0) {
            bad.push(format!("training.learning_rate = {} (need > 0)", t.learning_rate));
        }
        for (name, v) in [("beta1", t.beta1), ("beta2", t.beta2)] {
            if !(0.0..1.0).contains(&v) {
                bad.push(format!("training.{name} = {v} (need [0, 1))"));
            }
        }
        if !(t.epsilon > 0.0) {
            bad.push(format!("training.epsilon = {} (need > 0)", t.epsilon));
        }
        if t.precision != "f32" && t.precision != "f64" {
            bad.push(format!("training.precision = {:?} (need \"f32\" or \"f64\")", t.precision));
        }
        if t.balance != "label-balanced" && t.balance != "shuffle" {
            bad.push(format!(
                "training.balance = {:?} (need \"label-balanced\" or \"shuffle\")",
                t.balance
            ));
        }

        let f = &self.features;
        if f.mel_bins == 0 {
            bad.push("features.mel_bins = 0 (need >= 1)".into());
        }
        if f.frame_ms == 0 || f.hop_ms == 0 {
            bad.push("features.frame_ms and hop_ms must be >= 1".into());
        }
        if !(f.floor > 0.0) {
            bad.push(format!("features.floor = {} (need > 0)", f.floor));
        }

        let b = &self.backbone;
        if b.stack == 0 {
            bad.push("backbone.stack = 0 (need >= 1)".into());
        }
        if b.blocks == 0 {
            bad.push("backbone.blocks = 0 (need >= 1)".into());
        }
        if b.d_z == 0 || b.d_c == 0 || b.codebook_size == 0 {
            bad.push("backbone dimensions must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&b.mask_prob) {
            bad.push(format!("backbone.mask_prob = {} (need [0, 1])", b.mask_prob));
        }
        if b.mask_span == 0 {
            bad.push("backbone.mask_span = 0 (need >= 1)".into());
        }

        let s = &self.data.synth;
        if s.frames < b.stack {
            bad.push(format!(
                "data.synth.frames = {} shorter than backbone.stack = {}",
                s.frames, b.stack
            ));
        }
        if let Err(e) = self.synth_spec().validate() {
            bad.push(format!("data.synth: {e}"));
        }

        let mut names = std::collections::BTreeSet::new();
        for (i, stream) in self.streams.iter().enumerate() {
            let at = format!("streams[{i}]");
            if stream.name.is_empty() {
                bad.push(format!("{at}.name is empty"));
            } else if !names.insert(stream.name.clone()) {
                bad.push(format!("{at}.name = {:?} duplicated", stream.name));
            }
            match stream.kind.as_str() {
                "langvec" => {
                    if LangVecCategory::from_name(&stream.category).is_none() {
                        bad.push(format!("{at}.category = {:?} unknown", stream.category));
                    }
                }
                "geo" | "text" => {}
                other => {
                    bad.push(format!(
                        "{at}.kind = {other:?} (need \"langvec\", \"geo\", or \"text\")"
                    ));
                }
            }
            if stream.kind == "text" && stream.d_e == 0 {
                bad.push(format!("{at}.d_e = 0 (need >= 1)"));
            }
            if stream.d_q == 0 {
                bad.push(format!("{at}.d_q = 0 (need >= 1)"));
            }
            if !(stream.weight >= 0.0) {
                bad.push(format!("{at}.weight = {} (need >= 0)", stream.weight));
            }
            if !(stream.alpha >= 0.0) {
                bad.push(format!("{at}.alpha = {} (need >= 0)", stream.alpha));
            }
            if !(stream.margin >= 0.0) {
                bad.push(format!("{at}.margin = {} (need >= 0)", stream.margin));
            }
        }

        let e = &self.eval;
        if !(e.train_fraction > 0.0 && e.train_fraction < 1.0) {
            bad.push(format!("eval.train_fraction = {} (need (0, 1))", e.train_fraction));
        }

        if bad.is_empty() {
            Ok(())
        } else {
            Err(MasrError::Config(bad))
        }
    }

    /// The backbone architecture this config describes.
    pub fn backbone_config(&self) -> BackboneConfig {
        BackboneConfig {
            mel_bins: self.features.mel_bins,
            stack: self.backbone.stack,
            context: self.backbone.context,
            blocks: self.backbone.blocks,
            d_z: self.backbone.d_z,
            codebook_size: self.backbone.codebook_size,
            d_c: self.backbone.d_c,
            mask_prob: self.backbone.mask_prob,
            mask_span: self.backbone.mask_span,
        }
    }

    /// Optimizer settings, with precision mapped onto its enum.
    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            lr: self.training.learning_rate,
            beta1: self.training.beta1,
            beta2: self.training.beta2,
            eps: self.training.epsilon,
            precision: if self.training.precision == "f64" {
                Precision::Float64
            } else {
                Precision::Float32
            },
        }
    }

    /// Loss-side view of the stream sections.
    pub fn stream_configs(&self) -> Vec<StreamConfig> {
        self.streams
            .iter()
            .map(|s| StreamConfig {
                name: s.name.clone(),
                alpha: s.alpha,
                weight: s.weight,
                margin: s.margin,
                d_q: s.d_q,
                loss_on_p: s.loss_on_p,
            })
            .collect()
    }

    /// The batch-composition strategy named in the config.
    pub fn balance_strategy(&self) -> BalanceStrategy {
        if self.training.balance == "shuffle" {
            BalanceStrategy::Shuffle
        } else {
            BalanceStrategy::LabelBalanced
        }
    }

    /// The synthetic-corpus spec this config describes, rooted at the
    /// training seed.
    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            num_languages: self.data.synth.num_languages,
            utterances_per_language: self.data.synth.utterances_per_language,
            frames: self.data.synth.frames,
            mel_bins: self.features.mel_bins,
            confusable_pairs: self
                .data
                .synth
                .confusable_pairs
                .iter()
                .map(|p| ConfusablePair { a: p.a, b: p.b, epsilon: p.epsilon })
                .collect(),
            noise: self.data.synth.noise,
            seed: self.training.seed,
        }
    }

    /// SHA-256 of the canonical serialization: independent of key order
    /// and comments in the source file, sensitive to every value.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }

    /// Serialize back to TOML (used by `synth` to drop a ready-to-run
    /// config next to its outputs).
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
