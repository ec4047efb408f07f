//! Release gate: ten independent checks of the pipeline's numeric and
//! behavioral contract, from gradient correctness through end-to-end
//! training gains and byte-level determinism.
//!
//! Every check prints exactly one `criterion N: PASS/FAIL - detail` line
//! (run with `--nocapture` to see them); the test fails at the end if any
//! criterion failed, after all lines have printed. The training study
//! behind criteria 8-10 (and the log identity half of criterion 5) runs
//! once up front and is shared.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use masr::cli::{gradcheck_instance, GRADCHECK_TOL};
use masr::config::RunConfig;
use masr::corpus::{load_corpus, synthesize_to_dir};
use masr::diag::mining_diagnostics;
use masr::logfile::LogRecord;
use masr::prober::run_probe;
use masr::trainer::{train, TrainOptions};
use masr_core::eval::{metrics, one_vs_rest_eer};
use masr_core::loss::{
    assemble_p, build_sets, cosine_distance, mine, selection_change_rate, triplet_loss,
    SkipReason,
};
use masr_core::metadata::{encode_geo, haversine_km};
use masr_core::rng::SeedRng;

type Check = Result<String, String>;

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().expect("tempdir");
    // The expensive shared study first; its artifacts feed 5, 8, 9, 10.
    let study = run_study(tmp.path());

    let checks: Vec<(u32, Check)> = vec![
        (1, criterion_gradients()),
        (2, criterion_mining_oracle()),
        (3, criterion_alpha_zero(tmp.path())),
        (4, criterion_lambda_zero(tmp.path())),
        (5, criterion_loss_identity(&study)),
        (6, criterion_metric_oracles()),
        (7, criterion_geo_monotonicity()),
        (8, criterion_synthetic_gain(&study)),
        (9, criterion_change_rate(&study)),
        (10, criterion_determinism(&study)),
    ];

    let mut failed = Vec::new();
    for (n, outcome) in &checks {
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS - {detail}"),
            Err(detail) => {
                println!("criterion {n}: FAIL - {detail}");
                failed.push(*n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

// ---------------------------------------------------------------- study

/// Artifacts of the shared synthetic-corpus study: per-seed accuracy gaps
/// on the confusable-pair languages, the seed-0 run's full log, and a
/// from-scratch repetition of that run for the determinism check.
struct Study {
    config: RunConfig,
    gaps: Vec<f64>,
    elapsed: Duration,
    log: Vec<LogRecord>,
    metrics_first: PathBuf,
    metrics_again: PathBuf,
    fingerprint_first: u64,
    fingerprint_again: u64,
}

/// Eight synthetic languages, two confusable pairs, a language stream fed
/// by the fixture similarity table. The metadata arm splits its steps
/// 2000/500; the baseline spends the same total purely self-supervised.
fn study_config(seed: u64, phase1: u64, phase2: u64) -> String {
    format!(
        r#"
[features]
mel_bins = 20

[data.synth]
num_languages = 8
utterances_per_language = 64
frames = 64
noise = 0.25

[[data.synth.confusable_pairs]]
a = 0
b = 1
epsilon = 0.1

[[data.synth.confusable_pairs]]
a = 2
b = 3
epsilon = 0.1

[[streams]]
name = "language"
kind = "langvec"
table = "langvec.tsv"

[training]
seed = {seed}
batch_size = 16
phase1_steps = {phase1}
phase2_steps = {phase2}

[eval]
overlap_languages = ["lang00", "lang01", "lang02", "lang03"]
"#
    )
}

fn run_study(root: &Path) -> Result<Study, String> {
    let start = Instant::now();
    let mut gaps = Vec::new();
    let mut kept: Option<(RunConfig, Vec<LogRecord>, u64, PathBuf)> = None;

    for seed in [0u64, 1, 2] {
        let dir = root.join(format!("study-seed{seed}"));
        let meta_cfg = RunConfig::parse(&study_config(seed, 2000, 500))
            .map_err(|e| format!("seed {seed}: {e}"))?;
        let ssl_cfg = RunConfig::parse(&study_config(seed, 2500, 0))
            .map_err(|e| format!("seed {seed}: {e}"))?;

        let manifest = synthesize_to_dir(&meta_cfg, &dir.join("corpus"))
            .map_err(|e| format!("seed {seed} synth: {e}"))?;
        let corpus = load_corpus(&manifest, &meta_cfg)
            .map_err(|e| format!("seed {seed} load: {e}"))?;

        let metrics_path = dir.join("metrics.jsonl");
        let opts = TrainOptions {
            metrics_path: (seed == 0).then(|| metrics_path.clone()),
            ..TrainOptions::default()
        };
        let meta_run = train(&meta_cfg, &corpus, opts)
            .map_err(|e| format!("seed {seed} metadata arm: {e}"))?;
        let meta_probe = run_probe(&meta_run.checkpoint.model, &corpus, &meta_cfg, 1)
            .map_err(|e| format!("seed {seed} metadata probe: {e}"))?;

        let ssl_run = train(&ssl_cfg, &corpus, TrainOptions::default())
            .map_err(|e| format!("seed {seed} baseline arm: {e}"))?;
        let ssl_probe = run_probe(&ssl_run.checkpoint.model, &corpus, &ssl_cfg, 1)
            .map_err(|e| format!("seed {seed} baseline probe: {e}"))?;

        let on_pairs = |p: &masr::prober::ProbeReport| {
            p.overlap_accuracy.ok_or_else(|| format!("seed {seed}: no confusable-pair items held out"))
        };
        gaps.push(100.0 * (on_pairs(&meta_probe)? - on_pairs(&ssl_probe)?));

        if seed == 0 {
            let fp = meta_run.checkpoint.model.params.fingerprint();
            kept = Some((meta_cfg, meta_run.log, fp, metrics_path));
        }
    }
    let elapsed = start.elapsed();
    let (config, log, fingerprint_first, metrics_first) = kept.expect("seed 0 ran");

    // Repeat the seed-0 metadata run from scratch - fresh corpus directory,
    // fresh training - for the byte-level determinism check.
    let dir = root.join("study-rerun");
    let cfg = RunConfig::parse(&study_config(0, 2000, 500)).map_err(|e| e.to_string())?;
    let manifest =
        synthesize_to_dir(&cfg, &dir.join("corpus")).map_err(|e| format!("rerun synth: {e}"))?;
    let corpus = load_corpus(&manifest, &cfg).map_err(|e| format!("rerun load: {e}"))?;
    let metrics_again = dir.join("metrics.jsonl");
    let rerun = train(
        &cfg,
        &corpus,
        TrainOptions { metrics_path: Some(metrics_again.clone()), ..TrainOptions::default() },
    )
    .map_err(|e| format!("rerun train: {e}"))?;

    Ok(Study {
        config,
        gaps,
        elapsed,
        log,
        metrics_first,
        metrics_again,
        fingerprint_first,
        fingerprint_again: rerun.checkpoint.model.params.fingerprint(),
    })
}

// ---------------------------------------------------------- criterion 1

/// Small but fully featured: two metadata streams so the checker covers
/// every projection, plus the pure self-supervised instances it mixes in.
const GRADCHECK_CONFIG: &str = r#"
[features]
mel_bins = 6

[backbone]
d_z = 12
codebook_size = 8
d_c = 4

[[streams]]
name = "language"
kind = "langvec"
table = "langvec.tsv"
d_q = 6

[[streams]]
name = "origin"
kind = "geo"
d_q = 5
"#;

fn criterion_gradients() -> Check {
    let config = RunConfig::parse(GRADCHECK_CONFIG).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut ssl_only = 0usize;
    for instance in 0..20 {
        let out = gradcheck_instance(&config, instance)
            .map_err(|e| format!("instance {instance}: {e}"))?;
        if out.report.tolerance != GRADCHECK_TOL {
            return Err(format!("instance {instance} ran at tolerance {}", out.report.tolerance));
        }
        if !out.report.pass {
            return Err(format!(
                "instance {instance}: worst relative error {:.3e} exceeds {GRADCHECK_TOL:.0e}",
                out.report.worst()
            ));
        }
        worst = worst.max(out.report.worst());
        if !out.with_streams {
            ssl_only += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 120.0 {
        return Err(format!("took {secs:.1}s, budget is 120s"));
    }
    if ssl_only == 0 {
        return Err("no instance exercised the stream-free path".into());
    }
    Ok(format!(
        "20 instances ({ssl_only} stream-free), worst relative error {worst:.1e}, {secs:.1}s"
    ))
}

// ---------------------------------------------------------- criterion 2

/// Cosine distance written from the definition, sharing nothing with the
/// production helper.
fn ref_cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    1.0 - (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Brute-force hard-example selection: full O(B^2) scan per anchor,
/// farthest positive and nearest negative, lowest index on exact ties.
fn ref_mine(
    labels: &[Option<usize>],
    vectors: &[Option<Vec<f64>>],
) -> Vec<(Option<usize>, Option<usize>, Option<SkipReason>)> {
    let b = labels.len();
    let mut out = Vec::with_capacity(b);
    for i in 0..b {
        let li = match labels[i] {
            Some(l) => l,
            None => {
                out.push((None, None, Some(SkipReason::MissingLabel)));
                continue;
            }
        };
        let vi = vectors[i].as_ref().expect("labeled item has a vector");
        let mut k_plus: Option<usize> = None;
        let mut far = f64::NEG_INFINITY;
        let mut k_minus: Option<usize> = None;
        let mut near = f64::INFINITY;
        for k in 0..b {
            let lk = match labels[k] {
                Some(l) => l,
                None => continue,
            };
            let d = ref_cosine_distance(vi, vectors[k].as_ref().unwrap());
            if lk == li {
                if k != i && d > far {
                    far = d;
                    k_plus = Some(k);
                }
            } else if d < near {
                near = d;
                k_minus = Some(k);
            }
        }
        match (k_plus, k_minus) {
            (None, _) => out.push((None, None, Some(SkipReason::EmptyPositives))),
            (_, None) => out.push((None, None, Some(SkipReason::EmptyNegatives))),
            (p, n) => out.push((p, n, None)),
        }
    }
    out
}

fn criterion_mining_oracle() -> Check {
    let mut rng = SeedRng::from_seed(0x2515);
    let mut anchors = 0usize;
    let mut duplicates = 0usize;
    for batch in 0..1000u32 {
        let b = 2 + rng.below(31);
        let dim = 2 + rng.below(4);
        let classes = 1 + rng.below(4);
        let mut labels: Vec<Option<usize>> = Vec::with_capacity(b);
        let mut vectors: Vec<Option<Vec<f64>>> = Vec::with_capacity(b);
        for _ in 0..b {
            if rng.uniform() < 0.12 {
                labels.push(None);
                vectors.push(None);
            } else {
                labels.push(Some(rng.below(classes)));
                vectors.push(Some((0..dim).map(|_| rng.normal()).collect()));
            }
        }
        // Force exact distance ties by duplicating vectors bitwise; half the
        // time the twin keeps its own label, making it a tied negative.
        if rng.uniform() < 0.5 {
            let i = rng.below(b);
            let j = rng.below(b);
            if i != j && vectors[i].is_some() && vectors[j].is_some() {
                vectors[j] = vectors[i].clone();
                if rng.uniform() < 0.5 {
                    labels[j] = labels[i];
                }
                duplicates += 1;
            }
        }
        let sets = build_sets(&labels).map_err(|e| format!("batch {batch}: {e}"))?;
        let got = mine(&vectors, &sets).map_err(|e| format!("batch {batch}: {e}"))?;
        let want = ref_mine(&labels, &vectors);
        for (i, (sel, w)) in got.iter().zip(&want).enumerate() {
            let triple = (sel.k_plus, sel.k_minus, sel.skipped.clone());
            if triple != *w {
                return Err(format!(
                    "batch {batch} anchor {i}: selection {triple:?} disagrees with oracle {w:?}"
                ));
            }
        }
        anchors += b;
    }
    Ok(format!(
        "1000 batches, {anchors} anchors, {duplicates} injected duplicate ties, zero mismatches"
    ))
}

// ---------------------------------------------------------- criterion 3

/// Small corpus with the stream's encoding scale pinned to zero, so mining
/// on the padded vectors must reproduce the plain-embedding choices.
const ALPHA_ZERO_CONFIG: &str = r#"
[features]
mel_bins = 6

[backbone]
d_z = 12
codebook_size = 8
d_c = 4

[data.synth]
num_languages = 4
utterances_per_language = 12
frames = 10

[[streams]]
name = "language"
kind = "langvec"
table = "langvec.tsv"
d_q = 8
alpha = 0.0

[training]
batch_size = 8
phase1_steps = 12
phase2_steps = 6
"#;

fn criterion_alpha_zero(root: &Path) -> Check {
    // Direct batches: mining vectors assembled with scale zero must leave
    // the change rate at exactly 0.0, never merely close.
    let mut rng = SeedRng::from_seed(0xA1FA);
    for batch in 0..200u32 {
        let b = 2 + rng.below(15);
        let d_q = 2 + rng.below(4);
        let d_e = 2 + rng.below(5);
        let classes = 2 + rng.below(3);
        let mut labels = Vec::with_capacity(b);
        let mut qs: Vec<Option<Vec<f64>>> = Vec::with_capacity(b);
        let mut ps: Vec<Option<Vec<f64>>> = Vec::with_capacity(b);
        for _ in 0..b {
            if rng.uniform() < 0.1 {
                labels.push(None);
                qs.push(None);
                ps.push(None);
                continue;
            }
            labels.push(Some(rng.below(classes)));
            let q: Vec<f64> = (0..d_q).map(|_| rng.normal()).collect();
            let mut e: Vec<f64> = (0..d_e).map(|_| rng.normal()).collect();
            let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            for x in &mut e {
                *x /= norm;
            }
            ps.push(Some(assemble_p(&q, &e, 0.0)));
            qs.push(Some(q));
        }
        let sets = build_sets(&labels).map_err(|e| format!("batch {batch}: {e}"))?;
        let rate =
            selection_change_rate(&qs, &ps, &sets).map_err(|e| format!("batch {batch}: {e}"))?;
        if rate != 0.0 {
            return Err(format!("batch {batch}: change rate {rate:e}, want exactly 0"));
        }
    }

    // Whole-epoch diagnostics on a trained model configured with alpha 0.
    let config = RunConfig::parse(ALPHA_ZERO_CONFIG).map_err(|e| e.to_string())?;
    let dir = root.join("alpha-zero");
    let manifest = synthesize_to_dir(&config, &dir.join("corpus")).map_err(|e| e.to_string())?;
    let corpus = load_corpus(&manifest, &config).map_err(|e| e.to_string())?;
    let run = train(&config, &corpus, TrainOptions::default()).map_err(|e| e.to_string())?;
    let diag =
        mining_diagnostics(&run.checkpoint.model, &corpus, &config).map_err(|e| e.to_string())?;
    if diag.rows.is_empty() {
        return Err("diagnostics produced no batches".into());
    }
    for row in &diag.rows {
        if row.change_rate != 0.0 {
            return Err(format!(
                "diagnosed batch {}: change rate {:e}, want exactly 0",
                row.batch, row.change_rate
            ));
        }
    }
    Ok(format!(
        "change rate exactly 0.0 on 200 direct batches and {} diagnosed batches",
        diag.rows.len()
    ))
}

// ---------------------------------------------------------- criterion 4

fn lambda_zero_config(phase1: u64, phase2: u64) -> String {
    format!(
        r#"
[features]
mel_bins = 8

[backbone]
d_z = 16
codebook_size = 16
d_c = 8

[data.synth]
num_languages = 3
utterances_per_language = 8
frames = 12

[[streams]]
name = "language"
kind = "langvec"
table = "langvec.tsv"
d_q = 8
weight = 0.0

[training]
seed = 7
batch_size = 8
phase1_steps = {phase1}
phase2_steps = {phase2}
precision = "f64"
"#
    )
}

fn criterion_lambda_zero(root: &Path) -> Check {
    let ablated = RunConfig::parse(&lambda_zero_config(10, 200)).map_err(|e| e.to_string())?;
    let ssl_only = RunConfig::parse(&lambda_zero_config(210, 0)).map_err(|e| e.to_string())?;
    let dir = root.join("lambda-zero");
    let manifest = synthesize_to_dir(&ablated, &dir.join("corpus")).map_err(|e| e.to_string())?;
    let corpus = load_corpus(&manifest, &ablated).map_err(|e| e.to_string())?;

    let run_a = train(&ablated, &corpus, TrainOptions::default()).map_err(|e| e.to_string())?;
    let run_b = train(&ssl_only, &corpus, TrainOptions::default()).map_err(|e| e.to_string())?;

    let phase2 = run_a.log.iter().filter(|r| r.phase == 2).count();
    if phase2 != 200 {
        return Err(format!("ablated run logged {phase2} second-phase steps, want 200"));
    }
    if run_a.log.len() != 210 || run_b.log.len() != 210 {
        return Err(format!(
            "step counts differ: {} vs {}",
            run_a.log.len(),
            run_b.log.len()
        ));
    }
    for (x, y) in run_a.log.iter().zip(&run_b.log) {
        if x.l_ssl.to_bits() != y.l_ssl.to_bits() || x.l_masr.to_bits() != y.l_masr.to_bits() {
            return Err(format!(
                "loss trajectories diverge at step {}: {:.17e} vs {:.17e}",
                x.step, x.l_masr, y.l_masr
            ));
        }
    }
    let (a, b) = (&run_a.checkpoint, &run_b.checkpoint);
    if a.model.params.fingerprint() != b.model.params.fingerprint() {
        return Err("final parameters differ".into());
    }
    if a.adam_m.fingerprint() != b.adam_m.fingerprint()
        || a.adam_v.fingerprint() != b.adam_v.fingerprint()
        || a.adam_t != b.adam_t
    {
        return Err("optimizer state differs".into());
    }
    Ok("zero-weight 10+200-step run bitwise-matches the 210-step stream-free run \
        (per-step losses, parameters, optimizer moments)"
        .into())
}

// ---------------------------------------------------------- criterion 5

fn criterion_loss_identity(study: &Result<Study, String>) -> Check {
    // Hand fixture with one active anchor: unit vectors at cosine 0.85 (its
    // only positive) and 0.5 (its only negative) leave a hinge of exactly
    // margin + 0.15 - 0.5 = 0.15. The second anchor's hinge is negative and
    // the lone negative-class item has no positives, so the batch totals 0.15.
    let labels = vec![Some(0), Some(0), Some(1)];
    let qs: Vec<Option<Vec<f64>>> = vec![
        Some(vec![1.0, 0.0]),
        Some(vec![0.85, (1.0 - 0.85f64 * 0.85).sqrt()]),
        Some(vec![0.5, -(0.75f64).sqrt()]),
    ];
    let sets = build_sets(&labels).map_err(|e| e.to_string())?;
    let selections = mine(&qs, &sets).map_err(|e| e.to_string())?;
    let (slack, _) = triplet_loss(&selections, &qs, 0.5).map_err(|e| e.to_string())?;
    if (slack - 0.15).abs() > 1e-12 {
        return Err(format!("slack fixture: loss {slack:.17}, want 0.15 within 1e-12"));
    }

    // Identical positive and antipodal negative satisfy the margin: the
    // hinge clamps to zero and no gradient may leak through.
    let qs2: Vec<Option<Vec<f64>>> = vec![
        Some(vec![1.0, 0.0]),
        Some(vec![1.0, 0.0]),
        Some(vec![-1.0, 0.0]),
    ];
    let selections2 = mine(&qs2, &sets).map_err(|e| e.to_string())?;
    let (satisfied, grads) = triplet_loss(&selections2, &qs2, 0.5).map_err(|e| e.to_string())?;
    if satisfied != 0.0 {
        return Err(format!("satisfied fixture: loss {satisfied:e}, want exactly 0"));
    }
    let leaking = grads
        .iter()
        .flatten()
        .any(|g| g.iter().any(|&x| x != 0.0));
    if leaking {
        return Err("satisfied fixture: nonzero gradient at zero hinge".into());
    }

    // Log identity: every step's combined loss must equal the masked-
    // prediction term plus the weighted stream terms, bit for bit.
    let study = study.as_ref().map_err(|e| format!("study unavailable: {e}"))?;
    let weights: Vec<(String, f64)> = study
        .config
        .stream_configs()
        .iter()
        .map(|s| (s.name.clone(), s.weight))
        .collect();
    for rec in &study.log {
        let mut want = rec.l_ssl;
        if rec.phase == 2 {
            for (name, w) in &weights {
                if *w != 0.0 {
                    let lm = rec
                        .l_meta
                        .get(name)
                        .ok_or_else(|| format!("step {}: no logged loss for {name}", rec.step))?;
                    want += w * lm;
                }
            }
        } else if !rec.l_meta.is_empty() {
            return Err(format!("step {}: stream losses logged before phase 2", rec.step));
        }
        if want.to_bits() != rec.l_masr.to_bits() {
            return Err(format!(
                "step {}: combined loss {:.17e} != recomputed {:.17e}",
                rec.step, rec.l_masr, want
            ));
        }
    }
    Ok(format!(
        "fixtures exact (slack 0.15, satisfied 0); combined-loss identity bitwise across {} steps",
        study.log.len()
    ))
}

// ---------------------------------------------------------- criterion 6

/// Direct macro-F1 from per-class counts gathered by scanning.
fn ref_macro_f1(preds: &[usize], labels: &[usize], num_classes: usize) -> f64 {
    let mut sum = 0.0;
    let mut counted = 0usize;
    for c in 0..num_classes {
        let support = labels.iter().filter(|&&y| y == c).count();
        if support == 0 {
            continue;
        }
        let tp = preds.iter().zip(labels).filter(|&(&p, &y)| p == c && y == c).count();
        let fp = preds.iter().zip(labels).filter(|&(&p, &y)| p == c && y != c).count();
        let fn_ = support - tp;
        sum += if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2.0 * tp as f64 + (fp + fn_) as f64) };
        counted += 1;
    }
    sum / counted as f64
}

/// Bracket the equal-error point by brute-force sweeping a dense threshold
/// grid; the analytic crossing must land between the closest approach's
/// two error rates.
fn swept_eer_bracket(scores: &[f64], positive: &[bool], grid: usize) -> (f64, f64) {
    let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min) - 1e-6;
    let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1e-6;
    let pos = positive.iter().filter(|&&p| p).count();
    let neg = positive.len() - pos;
    let mut best = (f64::NAN, f64::NAN);
    let mut best_gap = f64::INFINITY;
    for g in 0..=grid {
        let t = lo + (hi - lo) * g as f64 / grid as f64;
        let mut fp = 0usize;
        let mut tp = 0usize;
        for (&s, &p) in scores.iter().zip(positive) {
            if s >= t {
                if p {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let far = fp as f64 / neg as f64;
        let frr = (pos - tp) as f64 / pos as f64;
        if (far - frr).abs() < best_gap {
            best_gap = (far - frr).abs();
            best = (far, frr);
        }
    }
    (best.0.min(best.1), best.0.max(best.1))
}

fn ref_predictions(scores: &[Vec<f64>]) -> Vec<usize> {
    scores
        .iter()
        .map(|row| {
            let mut best = 0usize;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

fn criterion_metric_oracles() -> Check {
    let mut rng = SeedRng::from_seed(0xE7A1);
    let mut eer_checked = 0usize;
    for fixture in 0..200u32 {
        let n = 1 + rng.below(100);
        let classes = 2 + rng.below(5);
        let labels: Vec<usize> = (0..n).map(|_| rng.below(classes)).collect();
        let mut scores: Vec<Vec<f64>> =
            (0..n).map(|_| (0..classes).map(|_| rng.uniform()).collect()).collect();
        // Occasional duplicated entries force exact argmax ties.
        if rng.uniform() < 0.3 {
            let row = rng.below(n);
            let a = rng.below(classes);
            let b = rng.below(classes);
            scores[row][a] = scores[row][b];
        }

        let rep = metrics(&scores, &labels, classes).map_err(|e| format!("fixture {fixture}: {e}"))?;
        let preds = ref_predictions(&scores);

        let correct = preds.iter().zip(&labels).filter(|&(&p, &y)| p == y).count();
        if rep.accuracy != correct as f64 / n as f64 {
            return Err(format!("fixture {fixture}: accuracy {} != {correct}/{n}", rep.accuracy));
        }
        let mut conf = vec![vec![0usize; classes]; classes];
        for (&p, &y) in preds.iter().zip(&labels) {
            conf[y][p] += 1;
        }
        if rep.confusion != conf {
            return Err(format!("fixture {fixture}: confusion matrix disagrees"));
        }
        for c in 0..classes {
            let support = labels.iter().filter(|&&y| y == c).count();
            let want = (support > 0).then(|| conf[c][c] as f64 / support as f64);
            if rep.per_class_accuracy[c] != want {
                return Err(format!("fixture {fixture}: per-class accuracy of {c} disagrees"));
            }
        }
        let f1 = ref_macro_f1(&preds, &labels, classes);
        if (rep.macro_f1 - f1).abs() > 1e-12 {
            return Err(format!(
                "fixture {fixture}: macro-F1 {} vs oracle {f1} beyond 1e-12",
                rep.macro_f1
            ));
        }
        if fixture % 4 == 0 {
            for c in 0..classes {
                let positive: Vec<bool> = labels.iter().map(|&y| y == c).collect();
                let pos = positive.iter().filter(|&&p| p).count();
                if pos == 0 || pos == n {
                    continue;
                }
                let col: Vec<f64> = scores.iter().map(|row| row[c]).collect();
                let eer = one_vs_rest_eer(&col, &positive)
                    .map_err(|e| format!("fixture {fixture}: {e}"))?;
                let (lo, hi) = swept_eer_bracket(&col, &positive, 20_000);
                if eer < lo - 1e-9 || eer > hi + 1e-9 {
                    return Err(format!(
                        "fixture {fixture} class {c}: EER {eer} outside sweep bracket [{lo}, {hi}]"
                    ));
                }
                eer_checked += 1;
            }
        }
    }

    // Degenerate fixtures with exact known values. Perfect one-hot scores:
    // every summary statistic sits at its ideal.
    let labels = vec![0usize, 1, 2, 0, 1, 2];
    let scores: Vec<Vec<f64>> = labels
        .iter()
        .map(|&y| (0..3).map(|c| if c == y { 1.0 } else { 0.0 }).collect())
        .collect();
    let rep = metrics(&scores, &labels, 3).map_err(|e| e.to_string())?;
    if rep.accuracy != 1.0 || rep.macro_f1 != 1.0 || rep.eer != 0.0 {
        return Err(format!(
            "perfect fixture: accuracy {} macro-F1 {} EER {}, want 1/1/0 exactly",
            rep.accuracy, rep.macro_f1, rep.eer
        ));
    }

    // Uniform scores: everything collapses onto class 0 and every one-vs-
    // rest curve degenerates to the chance diagonal.
    let labels = vec![0usize, 0, 0, 1, 1, 2, 2, 2];
    let scores = vec![vec![0.25; 3]; 8];
    let rep = metrics(&scores, &labels, 3).map_err(|e| e.to_string())?;
    let f1_first = 2.0 * 3.0 / (2.0 * 3.0 + 5.0 + 0.0);
    if rep.accuracy != 3.0 / 8.0 || rep.eer != 0.5 || rep.macro_f1 != f1_first / 3.0 {
        return Err(format!(
            "uniform fixture: accuracy {} macro-F1 {} EER {}, want 0.375 / {} / 0.5 exactly",
            rep.accuracy,
            rep.macro_f1,
            rep.eer,
            f1_first / 3.0
        ));
    }

    Ok(format!(
        "200 fixtures: accuracy/confusion/per-class exact, macro-F1 within 1e-12, \
         {eer_checked} EER curves inside sweep brackets; degenerate values exact"
    ))
}

// ---------------------------------------------------------- criterion 7

fn criterion_geo_monotonicity() -> Check {
    let mut rng = SeedRng::from_seed(0x6E0);
    let point = |rng: &mut SeedRng| (-90.0 + 180.0 * rng.uniform(), -180.0 + 360.0 * rng.uniform());
    let mut skipped = 0usize;
    for trial in 0..1000u32 {
        let (a, b, c, d) = (point(&mut rng), point(&mut rng), point(&mut rng), point(&mut rng));
        let h1 = haversine_km(a.0, a.1, b.0, b.1);
        let h2 = haversine_km(c.0, c.1, d.0, d.1);
        if (h1 - h2).abs() <= 1e-9 * h1.max(h2).max(1.0) {
            skipped += 1;
            continue;
        }
        let enc = |p: (f64, f64)| encode_geo(p.0, p.1).map_err(|e| format!("trial {trial}: {e}"));
        let c1 = cosine_distance(&enc(a)?, &enc(b)?).map_err(|e| format!("trial {trial}: {e}"))?;
        let c2 = cosine_distance(&enc(c)?, &enc(d)?).map_err(|e| format!("trial {trial}: {e}"))?;
        if (h1 < h2) != (c1 < c2) {
            return Err(format!(
                "trial {trial}: surface answers {h1:.6} vs {h2:.6} km but \
                 encodings order as {c1:.9} vs {c2:.9}"
            ));
        }
    }

    for _ in 0..50 {
        let p = point(&mut rng);
        if haversine_km(p.0, p.1, p.0, p.1) != 0.0 {
            return Err(format!("self-distance at {p:?} not exactly 0"));
        }
        let e = encode_geo(p.0, p.1).map_err(|e| e.to_string())?;
        let self_cos = cosine_distance(&e, &e).map_err(|e| e.to_string())?;
        if self_cos.abs() > 1e-12 {
            return Err(format!("encoding self-distance {self_cos:e} at {p:?}"));
        }
    }

    let half_circumference = core::f64::consts::PI * 6371.0;
    for (p, q) in [
        ((0.0, 0.0), (0.0, 180.0)),
        ((90.0, 0.0), (-90.0, 0.0)),
        ((45.0, 30.0), (-45.0, -150.0)),
    ] {
        let h = haversine_km(p.0, p.1, q.0, q.1);
        if (h - half_circumference).abs() > 1e-6 * half_circumference {
            return Err(format!("antipodal {p:?}-{q:?}: {h:.6} km, want {half_circumference:.6}"));
        }
        let ep = encode_geo(p.0, p.1).map_err(|e| e.to_string())?;
        let eq = encode_geo(q.0, q.1).map_err(|e| e.to_string())?;
        let cd = cosine_distance(&ep, &eq).map_err(|e| e.to_string())?;
        if (cd - 2.0).abs() > 1e-12 {
            return Err(format!("antipodal encodings {p:?}-{q:?}: cosine distance {cd}"));
        }
    }

    Ok(format!(
        "1000 ranked pairs agree ({skipped} near-ties skipped); identity exact; \
         antipodal within 1e-6 of {half_circumference:.3} km"
    ))
}

// ------------------------------------------------------- criteria 8-10

fn criterion_synthetic_gain(study: &Result<Study, String>) -> Check {
    let s = study.as_ref().map_err(|e| e.clone())?;
    let mean = s.gaps.iter().sum::<f64>() / s.gaps.len() as f64;
    let secs = s.elapsed.as_secs_f64();
    if s.gaps.iter().all(|&g| g < 0.0) {
        return Err(format!("confusable-pair gap negative on every seed: {:?}", s.gaps));
    }
    if mean < 3.0 {
        return Err(format!(
            "mean confusable-pair gap {mean:+.2} points (per seed {:?}) below the 3-point target",
            s.gaps
        ));
    }
    if secs >= 900.0 {
        return Err(format!("study took {secs:.0}s, budget is 900s"));
    }
    Ok(format!(
        "confusable-pair accuracy gap {:+.1}/{:+.1}/{:+.1} points over 3 seeds, \
         mean {mean:+.2} >= 3.0, {secs:.0}s",
        s.gaps[0], s.gaps[1], s.gaps[2]
    ))
}

fn criterion_change_rate(study: &Result<Study, String>) -> Check {
    let s = study.as_ref().map_err(|e| e.clone())?;
    let stream = s
        .config
        .stream_configs()
        .first()
        .map(|c| c.name.clone())
        .ok_or("study config has no streams")?;
    let phase2: Vec<&LogRecord> = s.log.iter().filter(|r| r.phase == 2).collect();
    if phase2.len() != 500 {
        return Err(format!("{} second-phase records, want 500", phase2.len()));
    }
    let mut sum = 0.0;
    for rec in &phase2 {
        match rec.change_rate.get(&stream) {
            Some(rate) => sum += rate,
            None => return Err(format!("step {}: no per-batch change rate logged", rec.step)),
        }
    }
    let mean = sum / phase2.len() as f64;
    if !(mean > 0.0) {
        return Err(format!("mean selection-change rate {mean} not strictly positive"));
    }
    Ok(format!("reported on all 500 metadata-phase batches, mean {mean:.3}"))
}

fn criterion_determinism(study: &Result<Study, String>) -> Check {
    let s = study.as_ref().map_err(|e| e.clone())?;
    let first = std::fs::read(&s.metrics_first).map_err(|e| e.to_string())?;
    let again = std::fs::read(&s.metrics_again).map_err(|e| e.to_string())?;
    if first != again {
        return Err(format!(
            "metrics logs differ between identical runs ({} vs {} bytes)",
            first.len(),
            again.len()
        ));
    }
    if s.fingerprint_first != s.fingerprint_again {
        return Err("final parameter fingerprints differ between identical runs".into());
    }
    Ok(format!(
        "repeated seed-0 run reproduced the metrics log byte-for-byte ({} bytes) \
         and the final parameter fingerprint",
        first.len()
    ))
}
