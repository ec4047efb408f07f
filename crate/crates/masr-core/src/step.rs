//! One training step's worth of computation: run the encoder over a
//! prepared batch, evaluate the masked-prediction and per-stream triplet
//! losses, and accumulate analytic gradients for every learnable tensor.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::features::FeatureMatrix;
use crate::loss::{
    assemble_p, build_sets, combined_loss, mine, project_backward, project_with_norm,
    selection_change_rate, triplet_loss, SkipReason, StreamConfig,
};
use crate::mat::Mat;
use crate::model::{ModelState, Params};
use crate::ssl::{encode, encode_backward, masked_ce, masked_ce_backward, pool, MaskPlan};

/// One batch item's attachment to one metadata stream. Both the label and
/// the fixed encoding must be present for the item to participate.
#[derive(Debug, Clone)]
pub struct StreamDatum {
    /// Batch-local dense label id; items compare equal iff ids match.
    pub label: Option<usize>,
    /// Unit-norm metadata encoding e.
    pub encoding: Option<Vec<f64>>,
}

impl StreamDatum {
    pub fn absent() -> Self {
        StreamDatum { label: None, encoding: None }
    }

    pub fn present(label: usize, encoding: Vec<f64>) -> Self {
        StreamDatum { label: Some(label), encoding: Some(encoding) }
    }

    fn participates(&self) -> bool {
        self.label.is_some() && self.encoding.is_some()
    }
}

/// A batch item with everything the step needs precomputed: features,
/// quantizer targets (from the unmasked features), the mask plan, and one
/// `StreamDatum` per configured stream.
#[derive(Debug, Clone)]
pub struct PreparedItem {
    pub features: FeatureMatrix,
    pub targets: Vec<usize>,
    pub mask: MaskPlan,
    pub streams: Vec<StreamDatum>,
}

#[derive(Debug, Clone, Default)]
pub struct PreparedBatch {
    pub items: Vec<PreparedItem>,
}

/// Per-stream outcome of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamReport {
    pub name: String,
    /// Sum of hinge terms (the stream's unweighted loss).
    pub l_meta: f64,
    /// Fraction of active anchors whose hardest negative differs between
    /// mining on p and mining on q alone.
    pub change_rate: f64,
    pub active_anchors: usize,
    pub skipped_missing: usize,
    pub skipped_no_positive: usize,
    pub skipped_no_negative: usize,
}

/// Every loss term of one step, as logged.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub l_ssl: f64,
    pub l_masr: f64,
    pub streams: Vec<StreamReport>,
    /// Masked steps across the whole batch.
    pub masked_steps: usize,
    /// Items whose mask plan selected nothing (they add no SSL term).
    pub empty_mask_items: usize,
}

/// Forward and backward over one batch.
///
/// `grads` is zeroed and then filled with d(total)/d(tensor), where the
/// total is the SSL loss plus the weight-scaled stream losses if
/// `include_meta` — matching the reported `l_masr`. Streams with zero
/// weight are still *evaluated* (their losses and mining diagnostics are
/// reported) but contribute no gradient at all, so their presence leaves
/// the parameter trajectory bit-identical to SSL-only training.
pub fn masr_batch_loss(
    batch: &PreparedBatch,
    model: &ModelState,
    streams: &[StreamConfig],
    include_meta: bool,
    grads: &mut Params,
) -> Result<LossReport> {
    if batch.items.is_empty() {
        return Err(CoreError::Empty("batch"));
    }
    for (_, t) in grads.tensors_mut() {
        t.fill(0.0);
    }
    let cfg = &model.cfg;
    let params = &model.params;
    if params.projections.len() != streams.len() {
        return Err(CoreError::ShapeMismatch {
            context: "projection tensors vs stream configs",
            expected: streams.len(),
            got: params.projections.len(),
        });
    }
    let b = batch.items.len();

    // Encoder forward, pooling, and the masked cross-entropy forward.
    let mut traces = Vec::with_capacity(b);
    let mut pooled = Vec::with_capacity(b);
    let mut ces = Vec::with_capacity(b);
    let mut masked_total = 0usize;
    let mut empty_mask_items = 0usize;
    let mut ce_sum = 0.0;
    for item in &batch.items {
        if item.streams.len() != streams.len() {
            return Err(CoreError::ShapeMismatch {
                context: "item stream data vs stream configs",
                expected: streams.len(),
                got: item.streams.len(),
            });
        }
        let trace = encode(&item.features, &item.mask, params, cfg)?;
        let h = pool(trace.output())?;
        let ce = masked_ce(trace.output(), &item.targets, &item.mask, &params.head)?;
        masked_total += ce.count;
        if ce.count == 0 {
            empty_mask_items += 1;
        }
        ce_sum += ce.ce_sum;
        traces.push(trace);
        pooled.push(h);
        ces.push(ce);
    }
    let l_ssl = if masked_total == 0 { 0.0 } else { ce_sum / masked_total as f64 };

    // Stream losses. dh[i] collects d(weighted meta)/dh for item i; the
    // flag records whether anything was actually accumulated so that
    // zero-weight runs never touch the SSL gradient path, even with +0.0.
    let mut dh: Vec<Vec<f64>> = (0..b).map(|_| vec![0.0; cfg.d_out()]).collect();
    let mut dh_used = vec![false; b];
    let mut reports = Vec::with_capacity(streams.len());
    let mut l_metas = Vec::with_capacity(streams.len());
    let mut weights = Vec::with_capacity(streams.len());
    if include_meta {
        for (j, sc) in streams.iter().enumerate() {
            sc.validate()?;
            let proj = &params.projections[j];
            let mut labels: Vec<Option<usize>> = Vec::with_capacity(b);
            let mut qs: Vec<Option<Vec<f64>>> = Vec::with_capacity(b);
            let mut norms: Vec<f64> = Vec::with_capacity(b);
            let mut ps: Vec<Option<Vec<f64>>> = Vec::with_capacity(b);
            for (item, h) in batch.items.iter().zip(&pooled) {
                let datum = &item.streams[j];
                if datum.participates() {
                    let e = datum.encoding.as_ref().expect("participant has encoding");
                    let (q, n) = project_with_norm(h, proj)?;
                    ps.push(Some(assemble_p(&q, e, sc.alpha)));
                    qs.push(Some(q));
                    norms.push(n);
                    labels.push(datum.label);
                } else {
                    qs.push(None);
                    ps.push(None);
                    norms.push(0.0);
                    labels.push(None);
                }
            }
            let sets = build_sets(&labels)?;
            let selections = mine(&ps, &sets)?;
            let (l_meta, d_vecs) = if sc.loss_on_p {
                triplet_loss(&selections, &ps, sc.margin)?
            } else {
                triplet_loss(&selections, &qs, sc.margin)?
            };
            let change_rate = selection_change_rate(&qs, &ps, &sets)?;

            let mut active = 0;
            let (mut s_missing, mut s_pos, mut s_neg) = (0, 0, 0);
            for sel in &selections {
                match sel.skipped {
                    None => active += 1,
                    Some(SkipReason::MissingLabel) => s_missing += 1,
                    Some(SkipReason::EmptyPositives) => s_pos += 1,
                    Some(SkipReason::EmptyNegatives) => s_neg += 1,
                }
            }
            reports.push(StreamReport {
                name: sc.name.clone(),
                l_meta,
                change_rate,
                active_anchors: active,
                skipped_missing: s_missing,
                skipped_no_positive: s_pos,
                skipped_no_negative: s_neg,
            });
            l_metas.push(l_meta);
            weights.push(sc.weight);

            if sc.weight == 0.0 {
                continue;
            }
            for i in 0..b {
                let (Some(q), Some(dv)) = (&qs[i], &d_vecs[i]) else { continue };
                // Under loss_on_p the gradient w.r.t. the fixed alpha*e
                // tail is discarded; only the q head reaches parameters.
                let dq = &dv[..q.len()];
                if dq.iter().all(|&g| g == 0.0) {
                    continue;
                }
                let scaled: Vec<f64> = dq.iter().map(|&g| g * sc.weight).collect();
                project_backward(
                    &pooled[i],
                    q,
                    norms[i],
                    &scaled,
                    proj,
                    &mut grads.projections[j],
                    &mut dh[i],
                );
                dh_used[i] = true;
            }
        }
    }

    let l_masr = combined_loss(l_ssl, &l_metas, &weights)?;

    // Backward: head + encoder per item. The SSL scale is the global
    // 1/masked_total; pooling spreads dh uniformly over steps.
    let scale = if masked_total == 0 { 0.0 } else { 1.0 / masked_total as f64 };
    for (i, item) in batch.items.iter().enumerate() {
        let trace = &traces[i];
        let z = trace.output();
        let mut dz = Mat::zeros(z.rows(), z.cols());
        if ces[i].count > 0 {
            masked_ce_backward(
                z,
                &ces[i],
                &item.targets,
                scale,
                &params.head,
                &mut grads.head,
                &mut dz,
            );
        }
        if dh_used[i] {
            let inv_t = 1.0 / z.rows() as f64;
            for t in 0..z.rows() {
                for (dzv, &dhv) in dz.row_mut(t).iter_mut().zip(&dh[i]) {
                    *dzv += dhv * inv_t;
                }
            }
        }
        encode_backward(trace, &item.mask, params, cfg, &dz, grads);
    }

    Ok(LossReport {
        l_ssl,
        l_masr,
        streams: reports,
        masked_steps: masked_total,
        empty_mask_items,
    })
}
