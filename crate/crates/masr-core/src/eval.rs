//! Frozen-encoder evaluation: a linear softmax probe over pooled
//! utterance embeddings, plus the reported metrics — accuracy, macro-F1,
//! macro one-vs-rest equal error rate, confusion matrix, and
//! overlap/non-overlap split accuracies.
//!
//! The probe never sees encoder parameters: it consumes embeddings that
//! were extracted beforehand, so freezing is structural, not a promise.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::model::Affine;
use crate::rng::SeedRng;

/// Softmax regression head trained on frozen embeddings.
#[derive(Debug, Clone)]
pub struct ProbeModel {
    pub map: Affine,
    pub num_classes: usize,
}

/// Training record, mostly for logging and tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeFit {
    pub steps: usize,
    pub final_loss: f64,
    pub converged: bool,
}

/// Loss-improvement window and threshold for probe convergence.
const PROBE_WINDOW: usize = 50;
const PROBE_TOL: f64 = 1e-5;
const PROBE_MAX_STEPS: usize = 5000;

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut denom = 0.0;
    for x in v.iter_mut() {
        *x = libm::exp(*x - max);
        denom += *x;
    }
    for x in v.iter_mut() {
        *x /= denom;
    }
}

/// Mean cross-entropy and gradient of the probe on the full set.
fn probe_loss_grad(
    map: &Affine,
    embeddings: &[Vec<f64>],
    labels: &[usize],
    grad: Option<&mut Affine>,
) -> f64 {
    let n = embeddings.len();
    let c = map.out_dim();
    let mut loss = 0.0;
    let mut logits = vec![0.0; c];
    let mut g = grad;
    for (x, &y) in embeddings.iter().zip(labels) {
        map.apply(x, &mut logits);
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &l in logits.iter() {
            denom += libm::exp(l - max);
        }
        loss += libm::log(denom) - (logits[y] - max);
        if let Some(gm) = g.as_deref_mut() {
            for k in 0..c {
                let p = libm::exp(logits[k] - max) / denom;
                let d = (p - if k == y { 1.0 } else { 0.0 }) / n as f64;
                gm.b[k] += d;
                let row = gm.w.row_mut(k);
                for (wi, &xi) in row.iter_mut().zip(x) {
                    *wi += d * xi;
                }
            }
        }
    }
    loss / n as f64
}

/// Fit the probe by full-batch gradient descent with Armijo backtracking.
/// Stops when the loss improves by less than 1e-5 over 50 steps, or at
/// 5000 steps.
pub fn train_probe(
    embeddings: &[Vec<f64>],
    labels: &[usize],
    num_classes: usize,
    seed: u64,
) -> Result<(ProbeModel, ProbeFit)> {
    if embeddings.is_empty() {
        return Err(CoreError::Empty("probe training set"));
    }
    if embeddings.len() != labels.len() {
        return Err(CoreError::ShapeMismatch {
            context: "probe embeddings vs labels",
            expected: embeddings.len(),
            got: labels.len(),
        });
    }
    if num_classes < 2 {
        return Err(CoreError::OutOfRange {
            what: "probe classes",
            value: num_classes as f64,
        });
    }
    let d = embeddings[0].len();
    for e in embeddings {
        if e.len() != d {
            return Err(CoreError::ShapeMismatch {
                context: "probe embedding dim",
                expected: d,
                got: e.len(),
            });
        }
    }
    let mut distinct = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if let Some(&max) = distinct.last() {
        if max >= num_classes {
            return Err(CoreError::OutOfRange { what: "probe label", value: max as f64 });
        }
    }
    if distinct.len() < 2 {
        return Err(CoreError::Empty("probe needs at least two classes present"));
    }

    let mut rng = SeedRng::from_seed(seed);
    let mut map = Affine::seeded(num_classes, d, &mut rng);
    let mut grad = Affine::zeros(num_classes, d);
    let mut history: Vec<f64> = Vec::new();
    let mut lr = 1.0;
    let mut loss = probe_loss_grad(&map, embeddings, labels, None);
    let mut steps = 0;
    let mut converged = false;
    while steps < PROBE_MAX_STEPS {
        grad.w.data_mut().fill(0.0);
        grad.b.fill(0.0);
        let base = probe_loss_grad(&map, embeddings, labels, Some(&mut grad));
        let g2: f64 = grad.w.data().iter().map(|g| g * g).sum::<f64>()
            + grad.b.iter().map(|g| g * g).sum::<f64>();
        if g2 == 0.0 {
            converged = true;
            break;
        }
        // Armijo: accept the largest halved step with sufficient decrease.
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = map.clone();
            for (t, &g) in trial.w.data_mut().iter_mut().zip(grad.w.data()) {
                *t -= lr * g;
            }
            for (t, &g) in trial.b.iter_mut().zip(&grad.b) {
                *t -= lr * g;
            }
            let f = probe_loss_grad(&trial, embeddings, labels, None);
            if f <= base - 1e-4 * lr * g2 {
                map = trial;
                loss = f;
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        steps += 1;
        if !accepted {
            converged = true; // step size exhausted: at numerical optimum
            break;
        }
        lr = (lr * 2.0).min(1e3);
        history.push(loss);
        if history.len() > PROBE_WINDOW {
            let before = history[history.len() - 1 - PROBE_WINDOW];
            if before - loss < PROBE_TOL {
                converged = true;
                break;
            }
        }
    }
    Ok((ProbeModel { map, num_classes }, ProbeFit { steps, final_loss: loss, converged }))
}

/// Softmax class scores for each embedding.
pub fn probe_scores(model: &ProbeModel, embeddings: &[Vec<f64>]) -> Vec<Vec<f64>> {
    embeddings
        .iter()
        .map(|x| {
            let mut s = vec![0.0; model.num_classes];
            model.map.apply(x, &mut s);
            softmax_in_place(&mut s);
            s
        })
        .collect()
}

/// Argmax prediction per row; ties go to the lowest class index.
pub fn predictions(scores: &[Vec<f64>]) -> Vec<usize> {
    scores
        .iter()
        .map(|row| {
            let mut best = 0;
            for (k, &s) in row.iter().enumerate() {
                if s > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Everything the evaluation reports for one labeled set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Macro-averaged one-vs-rest equal error rate over the softmax
    /// scores; classes without both positives and negatives are excluded.
    pub eer: f64,
    /// Per-class accuracy; absent for classes with no support.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// confusion[i][j] = items of true class i predicted as class j.
    pub confusion: Vec<Vec<usize>>,
}

/// Counting matrix: rows are true classes, columns predictions.
pub fn confusion(
    predicted: &[usize],
    labels: &[usize],
    num_classes: usize,
) -> Result<Vec<Vec<usize>>> {
    if predicted.len() != labels.len() {
        return Err(CoreError::ShapeMismatch {
            context: "predictions vs labels",
            expected: labels.len(),
            got: predicted.len(),
        });
    }
    let mut m = vec![vec![0usize; num_classes]; num_classes];
    for (&p, &y) in predicted.iter().zip(labels) {
        if p >= num_classes || y >= num_classes {
            return Err(CoreError::OutOfRange {
                what: "class index",
                value: p.max(y) as f64,
            });
        }
        m[y][p] += 1;
    }
    Ok(m)
}

/// One-vs-rest equal error rate from raw scores via the ROC polyline.
///
/// Operating points run from "accept nothing" (FAR 0, FRR 1) through each
/// distinct threshold to "accept everything" (FAR 1, FRR 0); the EER is
/// the linearly interpolated crossing of FAR = FRR. With all scores
/// identical the polyline is the single segment (0,1)-(1,0) and the
/// crossing lands at 0.5.
pub fn one_vs_rest_eer(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() || scores.is_empty() {
        return Err(CoreError::ShapeMismatch {
            context: "eer scores vs labels",
            expected: positive.len(),
            got: scores.len(),
        });
    }
    let pos = positive.iter().filter(|&&p| p).count();
    let neg = positive.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(CoreError::Empty("one-vs-rest class side"));
    }
    // Distinct thresholds, descending.
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
    thresholds.dedup();

    let mut prev = (0.0f64, 1.0f64); // (FAR, FRR) at threshold +inf
    if prev.0 >= prev.1 {
        return Ok(prev.0);
    }
    for t in thresholds {
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
        if far >= frr {
            // Crossed between prev and here; interpolate linearly.
            let (f0, r0) = prev;
            let (df, dr) = (far - f0, frr - r0);
            let denom = df - dr;
            if denom == 0.0 {
                return Ok(far);
            }
            let lam = (r0 - f0) / denom;
            return Ok(f0 + lam * df);
        }
        prev = (far, frr);
    }
    // Accept-everything endpoint (1, 0) closes the sweep; crossing is
    // guaranteed before or at it.
    let (f0, r0) = prev;
    let (df, dr) = (1.0 - f0, 0.0 - r0);
    let lam = (r0 - f0) / (df - dr);
    Ok(f0 + lam * df)
}

/// Full metric suite from softmax scores.
pub fn metrics(
    scores: &[Vec<f64>],
    labels: &[usize],
    num_classes: usize,
) -> Result<EvalReport> {
    if scores.is_empty() {
        return Err(CoreError::Empty("evaluation set"));
    }
    if num_classes == 0 {
        return Err(CoreError::Empty("class list"));
    }
    if scores.len() != labels.len() {
        return Err(CoreError::ShapeMismatch {
            context: "scores vs labels",
            expected: labels.len(),
            got: scores.len(),
        });
    }
    for row in scores {
        if row.len() != num_classes {
            return Err(CoreError::ShapeMismatch {
                context: "score row width",
                expected: num_classes,
                got: row.len(),
            });
        }
    }
    let preds = predictions(scores);
    let conf = confusion(&preds, labels, num_classes)?;
    let n = labels.len();
    let correct: usize = (0..num_classes).map(|c| conf[c][c]).sum();
    let accuracy = correct as f64 / n as f64;

    let mut per_class_accuracy = Vec::with_capacity(num_classes);
    let mut f1_sum = 0.0;
    let mut f1_classes = 0usize;
    for c in 0..num_classes {
        let support: usize = conf[c].iter().sum();
        let tp = conf[c][c];
        let fp: usize = (0..num_classes).filter(|&r| r != c).map(|r| conf[r][c]).sum();
        let fn_ = support - tp;
        if support == 0 {
            per_class_accuracy.push(None);
            continue; // zero-support classes are excluded from macro-F1
        }
        per_class_accuracy.push(Some(tp as f64 / support as f64));
        let f1 = if tp == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64)
        };
        f1_sum += f1;
        f1_classes += 1;
    }
    let macro_f1 = if f1_classes == 0 { 0.0 } else { f1_sum / f1_classes as f64 };

    let mut eer_sum = 0.0;
    let mut eer_classes = 0usize;
    for c in 0..num_classes {
        let pos_flags: Vec<bool> = labels.iter().map(|&y| y == c).collect();
        let pos = pos_flags.iter().filter(|&&p| p).count();
        if pos == 0 || pos == n {
            continue;
        }
        let class_scores: Vec<f64> = scores.iter().map(|row| row[c]).collect();
        eer_sum += one_vs_rest_eer(&class_scores, &pos_flags)?;
        eer_classes += 1;
    }
    let eer = if eer_classes == 0 { 0.0 } else { eer_sum / eer_classes as f64 };

    Ok(EvalReport { accuracy, macro_f1, eer, per_class_accuracy, confusion: conf })
}

/// Accuracy restricted to classes inside / outside the overlap set.
/// An empty partition yields `None`, never a fabricated zero.
pub fn split_report(
    predicted: &[usize],
    labels: &[usize],
    overlap: &[bool],
) -> Result<(Option<f64>, Option<f64>)> {
    if predicted.len() != labels.len() {
        return Err(CoreError::ShapeMismatch {
            context: "predictions vs labels",
            expected: labels.len(),
            got: predicted.len(),
        });
    }
    let mut counts = [(0usize, 0usize); 2]; // (correct, total) per side
    for (&p, &y) in predicted.iter().zip(labels) {
        if y >= overlap.len() {
            return Err(CoreError::OutOfRange { what: "class index", value: y as f64 });
        }
        let side = if overlap[y] { 0 } else { 1 };
        counts[side].1 += 1;
        if p == y {
            counts[side].0 += 1;
        }
    }
    let acc = |(c, t): (usize, usize)| {
        if t == 0 {
            None
        } else {
            Some(c as f64 / t as f64)
        }
    };
    Ok((acc(counts[0]), acc(counts[1])))
}
