//! Frozen-encoder probe evaluation.
//!
//! Utterances are embedded by a full-visibility encoder pass (no
//! masking) and mean pooling; a softmax layer is then trained on a
//! stratified per-language split and scored on the held-out rest.
//! Embedding extraction may fan out over worker threads but always
//! returns results in corpus order, and the encoder parameters are
//! checksummed around the whole evaluation — the probe must never
//! touch them.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use masr_core::eval::{metrics, predictions, probe_scores, split_report, train_probe, ProbeFit};
use masr_core::model::ModelState;
use masr_core::rng::{derive_seed, SeedRng};
use masr_core::ssl::{encode, pool, MaskPlan};

use crate::config::RunConfig;
use crate::corpus::{Corpus, CorpusItem};
use crate::error::{io_err, MasrError, Result};

/// Thread count resolution: explicit flag, then the `MASR_THREADS`
/// environment variable, then single-threaded.
pub fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        return Ok(n.max(1));
    }
    match std::env::var("MASR_THREADS") {
        Ok(raw) => match raw.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(MasrError::Config(vec![format!(
                "MASR_THREADS = {raw:?} (need a positive integer)"
            )])),
        },
        Err(_) => Ok(1),
    }
}

fn embed_one(model: &ModelState, item: &CorpusItem) -> masr_core::Result<Vec<f64>> {
    let t_s = item.features.num_steps(model.cfg.stack);
    let trace = encode(&item.features, &MaskPlan::empty(t_s), &model.params, &model.cfg)?;
    pool(trace.output())
}

/// Pooled embedding h for every corpus item, in corpus order regardless
/// of `threads`.
pub fn extract_embeddings(
    model: &ModelState,
    corpus: &Corpus,
    threads: usize,
) -> Result<Vec<Vec<f64>>> {
    let before = model.params.fingerprint();
    let n = corpus.items.len();
    let mut out: Vec<Vec<f64>> = vec![Vec::new(); n];
    let threads = threads.clamp(1, n.max(1));
    if threads <= 1 {
        for (slot, item) in out.iter_mut().zip(&corpus.items) {
            *slot = embed_one(model, item)?;
        }
    } else {
        let chunk = n.div_ceil(threads);
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for (slots, items) in out.chunks_mut(chunk).zip(corpus.items.chunks(chunk)) {
                handles.push(scope.spawn(move || -> masr_core::Result<()> {
                    for (slot, item) in slots.iter_mut().zip(items) {
                        *slot = embed_one(model, item)?;
                    }
                    Ok(())
                }));
            }
            handles
                .into_iter()
                .map(|h| h.join().expect("embedding worker panicked"))
                .collect::<masr_core::Result<()>>()
        })?;
    }
    // Read-only contract on the encoder; a mismatch is a library bug.
    assert_eq!(before, model.params.fingerprint(), "probe mutated encoder parameters");
    Ok(out)
}

/// Stratified train/eval split over item indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
}

/// Split each language separately so class balance carries over. A
/// language keeps at least one item on each side when it has two or
/// more; singletons go to the training side.
pub fn split_corpus(corpus: &Corpus, train_fraction: f64, seed: u64) -> SplitIndices {
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for lang in 0..corpus.languages.len() {
        let mut members: Vec<usize> = (0..corpus.items.len())
            .filter(|&i| corpus.items[i].language == lang)
            .collect();
        let mut rng = SeedRng::from_seed(derive_seed(seed, "split", lang as u64));
        rng.shuffle(&mut members);
        let n = members.len();
        let keep = if n < 2 {
            n
        } else {
            (((n as f64) * train_fraction).round() as usize).clamp(1, n - 1)
        };
        train.extend_from_slice(&members[..keep]);
        eval.extend_from_slice(&members[keep..]);
    }
    train.sort_unstable();
    eval.sort_unstable();
    SplitIndices { train, eval }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeFitSummary {
    pub steps: usize,
    pub final_loss: f64,
    pub converged: bool,
}

impl From<ProbeFit> for ProbeFitSummary {
    fn from(fit: ProbeFit) -> Self {
        ProbeFitSummary { steps: fit.steps, final_loss: fit.final_loss, converged: fit.converged }
    }
}

/// The full evaluation result, serialized as one JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Root seed of the probe's own randomness (split + init).
    pub seed: u64,
    pub classes: Vec<String>,
    pub num_train: usize,
    pub num_eval: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub eer: f64,
    pub per_class_accuracy: Vec<Option<f64>>,
    /// Accuracy over classes named in the config's overlap list; absent
    /// when that side of the partition is empty.
    pub overlap_accuracy: Option<f64>,
    pub non_overlap_accuracy: Option<f64>,
    /// confusion[i][j] = eval items of true class i predicted as j.
    pub confusion: Vec<Vec<usize>>,
    pub fit: ProbeFitSummary,
}

/// Embed, split, fit the probe, and score the held-out side.
pub fn run_probe(
    model: &ModelState,
    corpus: &Corpus,
    config: &RunConfig,
    threads: usize,
) -> Result<ProbeReport> {
    let embeddings = extract_embeddings(model, corpus, threads)?;
    let labels = corpus.language_labels();
    let num_classes = corpus.languages.len();
    let seed = config.eval.probe_seed;

    let split = split_corpus(corpus, config.eval.train_fraction, seed);
    if split.eval.is_empty() {
        return Err(MasrError::Missing("held-out evaluation items (corpus too small)".into()));
    }
    let gather = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
        (
            idx.iter().map(|&i| embeddings[i].clone()).collect(),
            idx.iter().map(|&i| labels[i]).collect(),
        )
    };
    let (train_x, train_y) = gather(&split.train);
    let (eval_x, eval_y) = gather(&split.eval);

    let (probe, fit) = train_probe(&train_x, &train_y, num_classes, derive_seed(seed, "probe", 0))?;
    let scores = probe_scores(&probe, &eval_x);
    let predicted = predictions(&scores);
    let report = metrics(&scores, &eval_y, num_classes)?;

    let overlap_names: BTreeSet<&str> =
        config.eval.overlap_languages.iter().map(|s| s.as_str()).collect();
    let overlap: Vec<bool> =
        corpus.languages.iter().map(|l| overlap_names.contains(l.as_str())).collect();
    let (overlap_accuracy, non_overlap_accuracy) = split_report(&predicted, &eval_y, &overlap)?;

    Ok(ProbeReport {
        seed,
        classes: corpus.languages.clone(),
        num_train: split.train.len(),
        num_eval: split.eval.len(),
        accuracy: report.accuracy,
        macro_f1: report.macro_f1,
        eer: report.eer,
        per_class_accuracy: report.per_class_accuracy,
        overlap_accuracy,
        non_overlap_accuracy,
        confusion: report.confusion,
        fit: fit.into(),
    })
}

/// Write `report.jsonl` (one JSON line) and, when asked, `confusion.csv`
/// with language names on both axes.
pub fn write_probe_outputs(out_dir: &Path, report: &ProbeReport, confusion_csv: bool) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let report_path = out_dir.join("report.jsonl");
    let line = serde_json::to_string(report).expect("report serializes");
    let mut file = File::create(&report_path).map_err(io_err(&report_path))?;
    file.write_all(line.as_bytes())
        .and_then(|_| file.write_all(b"\n"))
        .map_err(io_err(&report_path))?;

    if confusion_csv {
        let csv_path = out_dir.join("confusion.csv");
        let mut writer = csv::Writer::from_path(&csv_path)
            .map_err(|e| MasrError::Format { path: csv_path.clone(), message: e.to_string() })?;
        let mut header = vec![String::from("true\\predicted")];
        header.extend(report.classes.iter().cloned());
        writer
            .write_record(&header)
            .and_then(|_| {
                for (i, row) in report.confusion.iter().enumerate() {
                    let mut record = vec![report.classes[i].clone()];
                    record.extend(row.iter().map(|c| c.to_string()));
                    writer.write_record(&record)?;
                }
                writer.flush().map_err(csv::Error::from)
            })
            .map_err(|e| MasrError::Format { path: csv_path.clone(), message: e.to_string() })?;
    }
    Ok(())
}
