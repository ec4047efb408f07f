//! Mining diagnostics: how hard-negative selection behaves on real
//! batches under a trained model.
//!
//! The diagnostic replays one epoch of batches exactly as the first
//! training epoch would compose them (same batch plan and mask seeds),
//! evaluates every metadata stream, and reports per batch how often the
//! appended metadata block changed the hardest-negative choice, along
//! with triplet activity counters. The headline number is the mean
//! selection change rate per stream.

use std::path::Path;

use serde::{Deserialize, Serialize};

use masr_core::model::ModelState;
use masr_core::rng::derive_seed;
use masr_core::step::{masr_batch_loss, PreparedBatch, PreparedItem};
use masr_core::ssl::MaskPlan;

use crate::config::RunConfig;
use crate::corpus::Corpus;
use crate::error::{io_err, MasrError, Result};

/// One (batch, stream) observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagRow {
    pub batch: usize,
    pub stream: String,
    pub change_rate: f64,
    pub active_anchors: usize,
    pub skipped_missing: usize,
    pub skipped_no_positive: usize,
    pub skipped_no_negative: usize,
    pub l_meta: f64,
}

/// Per-stream aggregate over all diagnosed batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub stream: String,
    pub batches: usize,
    pub mean_change_rate: f64,
    pub total_active_anchors: usize,
    pub total_skipped: usize,
    pub mean_l_meta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiningDiagnostics {
    pub rows: Vec<DiagRow>,
    pub summary: Vec<StreamSummary>,
}

/// Evaluate mining over one epoch of batches under frozen parameters.
pub fn mining_diagnostics(
    model: &ModelState,
    corpus: &Corpus,
    config: &RunConfig,
) -> Result<MiningDiagnostics> {
    let streams = config.stream_configs();
    if streams.is_empty() {
        return Err(MasrError::Config(vec![
            "no metadata streams configured; nothing to diagnose".into(),
        ]));
    }
    let seed = config.training.seed;
    let labels = corpus.language_labels();
    let plan = masr_core::batching::plan_batches(
        &labels,
        config.training.batch_size,
        derive_seed(seed, "batches", 0),
        config.balance_strategy(),
    )?;

    let targets: Vec<Vec<usize>> = corpus
        .items
        .iter()
        .map(|item| model.quantizer.quantize_targets(&item.features))
        .collect::<masr_core::Result<_>>()?;

    let mut grads = model.params.zeros_like();
    let mut rows = Vec::new();
    for (b, members) in plan.batches.iter().enumerate() {
        let mask_root = derive_seed(seed, "mask", b as u64);
        let batch = PreparedBatch {
            items: members
                .iter()
                .enumerate()
                .map(|(slot, &r)| PreparedItem {
                    features: corpus.items[r].features.clone(),
                    targets: targets[r].clone(),
                    mask: MaskPlan::sample(
                        targets[r].len(),
                        model.cfg.mask_prob,
                        model.cfg.mask_span,
                        derive_seed(mask_root, "item", slot as u64),
                    ),
                    streams: corpus.items[r].streams.clone(),
                })
                .collect(),
        };
        let report = masr_batch_loss(&batch, model, &streams, true, &mut grads)?;
        for s in &report.streams {
            rows.push(DiagRow {
                batch: b,
                stream: s.name.clone(),
                change_rate: s.change_rate,
                active_anchors: s.active_anchors,
                skipped_missing: s.skipped_missing,
                skipped_no_positive: s.skipped_no_positive,
                skipped_no_negative: s.skipped_no_negative,
                l_meta: s.l_meta,
            });
        }
    }

    let summary = streams
        .iter()
        .map(|sc| {
            let mine: Vec<&DiagRow> = rows.iter().filter(|r| r.stream == sc.name).collect();
            let n = mine.len().max(1) as f64;
            StreamSummary {
                stream: sc.name.clone(),
                batches: mine.len(),
                mean_change_rate: mine.iter().map(|r| r.change_rate).sum::<f64>() / n,
                total_active_anchors: mine.iter().map(|r| r.active_anchors).sum(),
                total_skipped: mine
                    .iter()
                    .map(|r| r.skipped_missing + r.skipped_no_positive + r.skipped_no_negative)
                    .sum(),
                mean_l_meta: mine.iter().map(|r| r.l_meta).sum::<f64>() / n,
            }
        })
        .collect();
    Ok(MiningDiagnostics { rows, summary })
}

/// Write `change_rate.csv` (one row per batch and stream) and
/// `mining_summary.jsonl` (one JSON line per stream).
pub fn write_diagnostics(out_dir: &Path, diag: &MiningDiagnostics) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let csv_path = out_dir.join("change_rate.csv");
    let mut writer = csv::Writer::from_path(&csv_path)
        .map_err(|e| MasrError::Format { path: csv_path.clone(), message: e.to_string() })?;
    let write_all = |writer: &mut csv::Writer<std::fs::File>| -> csv::Result<()> {
        for row in &diag.rows {
            writer.serialize(row)?;
        }
        writer.flush()?;
        Ok(())
    };
    write_all(&mut writer)
        .map_err(|e| MasrError::Format { path: csv_path.clone(), message: e.to_string() })?;

    let summary_path = out_dir.join("mining_summary.jsonl");
    let mut text = String::new();
    for s in &diag.summary {
        text.push_str(&serde_json::to_string(s).expect("summary serializes"));
        text.push('\n');
    }
    std::fs::write(&summary_path, text).map_err(io_err(&summary_path))?;
    Ok(())
}
