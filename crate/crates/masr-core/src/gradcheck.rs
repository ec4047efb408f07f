//! Finite-difference verification of the analytic gradients.
//!
//! The numeric side evaluates the *entire* real pipeline — encoder,
//! pooling, projections, mining, hinge, weighted combination — at
//! parameter +/- h, so any disagreement with the analytic pass is a real
//! bug rather than an artifact of a simplified replica. Hard selection is
//! a step function of the parameters, and the hinge has a kink, so checks
//! are only meaningful on batches where every margin and every selection
//! is decided by a clear gap; `batch_is_well_conditioned` tests exactly
//! that, and callers resample until it holds.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::loss::{assemble_p, build_sets, cosine_distance, project, StreamConfig};
use crate::model::{ModelState, Params};
use crate::ssl::{encode, pool};
use crate::step::{masr_batch_loss, LossReport, PreparedBatch};

/// Central-difference step; chosen for ~1e-10 truncation error against
/// unit-scale curvatures while staying far above f64 rounding noise.
pub const FD_STEP: f64 = 1e-5;

/// Margin-slack / selection-gap threshold below which a batch is rejected
/// as too close to a non-differentiable boundary.
pub const MIN_GAP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub elements: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub tolerance: f64,
    pub pass: bool,
}

impl GradCheckReport {
    /// Worst relative error across all tensors.
    pub fn worst(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_err).fold(0.0, f64::max)
    }

    /// Names of tensors exceeding the tolerance.
    pub fn failing(&self) -> Vec<&str> {
        self.tensors
            .iter()
            .filter(|t| t.max_rel_err > self.tolerance)
            .map(|t| t.name.as_str())
            .collect()
    }
}

/// Backprop gradients of the combined loss for one batch.
pub fn analytic_gradients(
    batch: &PreparedBatch,
    model: &ModelState,
    streams: &[StreamConfig],
    include_meta: bool,
) -> Result<(LossReport, Params)> {
    let mut grads = model.params.zeros_like();
    let report = masr_batch_loss(batch, model, streams, include_meta, &mut grads)?;
    Ok((report, grads))
}

/// Central finite differences of the combined loss over every parameter.
pub fn numeric_gradients(
    batch: &PreparedBatch,
    model: &ModelState,
    streams: &[StreamConfig],
    include_meta: bool,
    step: f64,
) -> Result<Params> {
    let mut probe = model.clone();
    let mut numeric = model.params.zeros_like();
    let mut scratch = model.params.zeros_like();
    let n_tensors = model.params.tensors().len();
    for ti in 0..n_tensors {
        let len = model.params.tensors()[ti].1.len();
        for i in 0..len {
            let base = model.params.tensors()[ti].1[i];
            probe.params.tensors_mut()[ti].1[i] = base + step;
            let up = masr_batch_loss(batch, &probe, streams, include_meta, &mut scratch)?
                .l_masr;
            probe.params.tensors_mut()[ti].1[i] = base - step;
            let down = masr_batch_loss(batch, &probe, streams, include_meta, &mut scratch)?
                .l_masr;
            probe.params.tensors_mut()[ti].1[i] = base;
            numeric.tensors_mut()[ti].1[i] = (up - down) / (2.0 * step);
        }
    }
    Ok(numeric)
}

/// Elementwise comparison with the symmetric relative error
/// |a - n| / max(|a| + |n|, 1e-8).
pub fn compare(analytic: &Params, numeric: &Params, tolerance: f64) -> GradCheckReport {
    let mut tensors = Vec::new();
    let mut pass = true;
    for ((name, a), (_, n)) in analytic.tensors().into_iter().zip(numeric.tensors()) {
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for (&av, &nv) in a.iter().zip(n) {
            let abs = (av - nv).abs();
            let rel = abs / (av.abs() + nv.abs()).max(1e-8);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(rel);
        }
        if max_rel > tolerance {
            pass = false;
        }
        tensors.push(TensorCheck {
            name,
            max_rel_err: max_rel,
            max_abs_err: max_abs,
            elements: a.len(),
        });
    }
    GradCheckReport { tensors, tolerance, pass }
}

/// Full check: analytic vs numeric at `tolerance`.
pub fn grad_check(
    batch: &PreparedBatch,
    model: &ModelState,
    streams: &[StreamConfig],
    include_meta: bool,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let (_, analytic) = analytic_gradients(batch, model, streams, include_meta)?;
    let numeric = numeric_gradients(batch, model, streams, include_meta, FD_STEP)?;
    Ok(compare(&analytic, &numeric, tolerance))
}

/// True when every active anchor's hinge argument stays away from zero and
/// every argmax/argmin winner beats the runner-up by at least `min_gap`,
/// for every stream — i.e. small parameter perturbations cannot flip a
/// selection or cross the hinge kink.
pub fn batch_is_well_conditioned(
    batch: &PreparedBatch,
    model: &ModelState,
    streams: &[StreamConfig],
    min_gap: f64,
) -> Result<bool> {
    // Independent mini-forward: encode, pool, project, assemble.
    let mut pooled = Vec::with_capacity(batch.items.len());
    for item in &batch.items {
        let trace = encode(&item.features, &item.mask, &model.params, &model.cfg)?;
        pooled.push(pool(trace.output())?);
    }
    for (j, sc) in streams.iter().enumerate() {
        let proj = &model.params.projections[j];
        let mut labels = Vec::new();
        let mut qs: Vec<Option<Vec<f64>>> = Vec::new();
        let mut ps: Vec<Option<Vec<f64>>> = Vec::new();
        for (item, h) in batch.items.iter().zip(&pooled) {
            let datum = &item.streams[j];
            match (&datum.label, &datum.encoding) {
                (Some(l), Some(e)) => {
                    let q = project(h, proj)?;
                    ps.push(Some(assemble_p(&q, e, sc.alpha)));
                    qs.push(Some(q));
                    labels.push(Some(*l));
                }
                _ => {
                    qs.push(None);
                    ps.push(None);
                    labels.push(None);
                }
            }
        }
        let sets = build_sets(&labels)?;
        for (i, (pos, neg)) in sets.iter().enumerate() {
            let (Some(pi), Some(qi)) = (&ps[i], &qs[i]) else { continue };
            if pos.is_empty() || neg.is_empty() {
                continue;
            }
            // Selection gaps on the mining vectors.
            let mut dpos: Vec<f64> = Vec::new();
            for &k in pos {
                dpos.push(cosine_distance(pi, ps[k].as_ref().expect("labeled item"))?);
            }
            let mut dneg: Vec<f64> = Vec::new();
            for &k in neg {
                dneg.push(cosine_distance(pi, ps[k].as_ref().expect("labeled item"))?);
            }
            if !gap_clear(&dpos, true, min_gap) || !gap_clear(&dneg, false, min_gap) {
                return Ok(false);
            }
            // Margin slack: selection always comes from the p distances,
            // the hinge from the configured loss distances.
            let kp = argbest(&dpos, true);
            let km = argbest(&dneg, false);
            let (dp_loss, dn_loss) = if sc.loss_on_p {
                (dpos[kp], dneg[km])
            } else {
                let qp = qs[pos[kp]].as_ref().expect("labeled item");
                let qn = qs[neg[km]].as_ref().expect("labeled item");
                (cosine_distance(qi, qp)?, cosine_distance(qi, qn)?)
            };
            let slack = sc.margin + dp_loss - dn_loss;
            if slack.abs() < min_gap {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn argbest(d: &[f64], max: bool) -> usize {
    let mut best = 0;
    for i in 1..d.len() {
        if (max && d[i] > d[best]) || (!max && d[i] < d[best]) {
            best = i;
        }
    }
    best
}

/// The winner must beat every other candidate by `min_gap`.
fn gap_clear(d: &[f64], max: bool, min_gap: f64) -> bool {
    if d.len() < 2 {
        return true;
    }
    let b = argbest(d, max);
    d.iter().enumerate().all(|(i, &v)| {
        i == b || if max { d[b] - v >= min_gap } else { v - d[b] >= min_gap }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BackboneConfig;

    #[test]
    fn gap_logic() {
        assert!(gap_clear(&[0.9, 0.1], true, 1e-3));
        assert!(!gap_clear(&[0.9, 0.8999], true, 1e-3));
        assert!(gap_clear(&[0.1, 0.9], false, 1e-3));
        assert!(!gap_clear(&[0.1, 0.1005, 0.9], false, 1e-3));
        assert!(gap_clear(&[0.5], true, 1e-3));
    }

    #[test]
    fn compare_flags_the_corrupted_tensor() {
        let cfg = BackboneConfig {
            mel_bins: 2,
            stack: 1,
            context: 1,
            blocks: 1,
            d_z: 3,
            codebook_size: 4,
            d_c: 2,
            ..BackboneConfig::default()
        };
        let a = Params::seeded(&cfg, &[2], 5);
        let mut b = a.clone();
        b.head.w.data_mut()[0] += 1e-2;
        let report = compare(&a, &b, 1e-4);
        assert!(!report.pass);
        assert_eq!(report.failing(), ["head.w"]);
        let clean = compare(&a, &a.clone(), 1e-4);
        assert!(clean.pass);
        assert_eq!(clean.worst(), 0.0);
    }
}
