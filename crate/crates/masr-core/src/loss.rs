//! Metadata-aware triplet objective: per-stream projections, mining
//! representations, hard positive/negative selection, the hinge loss, and
//! the weighted combination with the masked-prediction loss.
//!
//! Selection and loss deliberately use different representations: the
//! hardest neighbours are chosen by cosine distance on the concatenated
//! vector p = [q ; alpha * e] (projection output next to the scaled fixed
//! metadata encoding), while the hinge itself measures distances between
//! the projection outputs q alone. Selection is treated as a constant
//! during differentiation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::mat::{dot, norm2};
use crate::model::Affine;

/// Per-stream hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamConfig {
    pub name: String,
    /// Scale of the fixed metadata encoding inside the mining vector.
    pub alpha: f64,
    /// Loss weight lambda of this stream in the combined objective.
    pub weight: f64,
    /// Hinge margin gamma.
    pub margin: f64,
    /// Projection output dimension.
    pub d_q: usize,
    /// Ablation: measure the hinge distances on p instead of q.
    pub loss_on_p: bool,
}

impl StreamConfig {
    pub fn new(name: impl Into<String>, d_q: usize) -> Self {
        StreamConfig {
            name: name.into(),
            alpha: 1.0,
            weight: 16.0,
            margin: 0.5,
            d_q,
            loss_on_p: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(CoreError::OutOfRange { what: "stream alpha", value: self.alpha });
        }
        if !(self.weight.is_finite() && self.weight >= 0.0) {
            return Err(CoreError::OutOfRange { what: "stream weight", value: self.weight });
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(CoreError::OutOfRange { what: "stream margin", value: self.margin });
        }
        if self.d_q == 0 {
            return Err(CoreError::OutOfRange { what: "stream d_q", value: 0.0 });
        }
        Ok(())
    }
}

/// Why an anchor took no part in mining for a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    /// No usable label/encoding for this item on this stream.
    MissingLabel,
    /// No other batch item shares the anchor's label.
    EmptyPositives,
    /// No batch item carries a different label.
    EmptyNegatives,
}

/// Outcome of hard mining for one anchor on one stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripletSelection {
    pub anchor: usize,
    pub k_plus: Option<usize>,
    pub k_minus: Option<usize>,
    pub skipped: Option<SkipReason>,
}

impl TripletSelection {
    pub fn is_active(&self) -> bool {
        self.skipped.is_none()
    }

    fn skip(anchor: usize, reason: SkipReason) -> Self {
        TripletSelection { anchor, k_plus: None, k_minus: None, skipped: Some(reason) }
    }
}

/// 1 - cos(a, b), in [0, 2]. Zero-norm inputs are an error, never clamped
/// into validity.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CoreError::ShapeMismatch {
            context: "cosine distance operands",
            expected: a.len(),
            got: b.len(),
        });
    }
    let na = norm2(a);
    let nb = norm2(b);
    if na == 0.0 {
        return Err(CoreError::ZeroNorm("cosine distance lhs"));
    }
    if nb == 0.0 {
        return Err(CoreError::ZeroNorm("cosine distance rhs"));
    }
    // The quotient can drift a few ulp outside [-1, 1]; keep the distance
    // inside its stated codomain.
    Ok(1.0 - (dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Gradients of `cosine_distance(a, b)` with respect to both arguments.
fn cosine_distance_grad(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let na = norm2(a);
    let nb = norm2(b);
    let d = dot(a, b);
    let inv = 1.0 / (na * nb);
    let ca = d / (na * na * na * nb);
    let cb = d / (nb * nb * nb * na);
    let da = a.iter().zip(b).map(|(&ai, &bi)| ca * ai - inv * bi).collect();
    let db = b.iter().zip(a).map(|(&bi, &ai)| cb * bi - inv * ai).collect();
    (da, db)
}

/// Affine projection followed by l2-normalization; also returns the
/// pre-normalization norm needed by the backward pass.
pub fn project_with_norm(h: &[f64], proj: &Affine) -> Result<(Vec<f64>, f64)> {
    if proj.in_dim() != h.len() {
        return Err(CoreError::ShapeMismatch {
            context: "projection input dim",
            expected: proj.in_dim(),
            got: h.len(),
        });
    }
    let mut q = vec![0.0; proj.out_dim()];
    proj.apply(h, &mut q);
    let n = norm2(&q);
    if n == 0.0 {
        return Err(CoreError::ZeroNorm("projection output"));
    }
    for v in &mut q {
        *v /= n;
    }
    Ok((q, n))
}

/// The per-stream projection q = normalize(W h + b).
pub fn project(h: &[f64], proj: &Affine) -> Result<Vec<f64>> {
    project_with_norm(h, proj).map(|(q, _)| q)
}

/// Backward of [`project_with_norm`]: push dL/dq through the
/// normalization and the affine map, adding into `d_proj` and `dh`.
pub fn project_backward(
    h: &[f64],
    q: &[f64],
    pre_norm: f64,
    dq: &[f64],
    proj: &Affine,
    d_proj: &mut Affine,
    dh: &mut [f64],
) {
    // u = Wh + b, q = u/|u|  =>  dL/du = (dq - (q . dq) q) / |u|.
    let qd = dot(q, dq);
    let du: Vec<f64> =
        q.iter().zip(dq).map(|(&qi, &di)| (di - qd * qi) / pre_norm).collect();
    for (o, &g) in du.iter().enumerate() {
        d_proj.b[o] += g;
        let wrow = d_proj.w.row_mut(o);
        for (wi, &hi) in wrow.iter_mut().zip(h) {
            *wi += g * hi;
        }
    }
    proj.w.matvec_t_accum(&du, dh);
}

/// Concatenate the projection output with the scaled metadata encoding.
pub fn assemble_p(q: &[f64], e: &[f64], alpha: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(q.len() + e.len());
    p.extend_from_slice(q);
    p.extend(e.iter().map(|&v| alpha * v));
    p
}

/// Per-anchor positive and negative index sets for one stream. Items with
/// no label on the stream appear in nobody's sets and get empty sets of
/// their own.
pub fn build_sets(labels: &[Option<usize>]) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if labels.len() < 2 {
        return Err(CoreError::OutOfRange {
            what: "batch size for mining",
            value: labels.len() as f64,
        });
    }
    let mut sets = Vec::with_capacity(labels.len());
    for (i, li) in labels.iter().enumerate() {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        if let Some(li) = li {
            for (k, lk) in labels.iter().enumerate() {
                match lk {
                    Some(lk) if lk == li => {
                        // The anchor itself is excluded: its self-distance
                        // of zero could never be the farthest positive.
                        if k != i {
                            pos.push(k);
                        }
                    }
                    Some(_) => neg.push(k),
                    None => {}
                }
            }
        }
        sets.push((pos, neg));
    }
    Ok(sets)
}

/// Hard selection: the farthest positive and the nearest negative by
/// cosine distance between mining vectors. Ties go to the lowest index.
pub fn mine(
    p: &[Option<Vec<f64>>],
    sets: &[(Vec<usize>, Vec<usize>)],
) -> Result<Vec<TripletSelection>> {
    if p.len() != sets.len() {
        return Err(CoreError::ShapeMismatch {
            context: "mining vectors vs sets",
            expected: sets.len(),
            got: p.len(),
        });
    }
    let mut out = Vec::with_capacity(p.len());
    for (i, (pos, neg)) in sets.iter().enumerate() {
        let pi = match &p[i] {
            Some(v) => v,
            None => {
                out.push(TripletSelection::skip(i, SkipReason::MissingLabel));
                continue;
            }
        };
        if pos.is_empty() {
            out.push(TripletSelection::skip(i, SkipReason::EmptyPositives));
            continue;
        }
        if neg.is_empty() {
            out.push(TripletSelection::skip(i, SkipReason::EmptyNegatives));
            continue;
        }
        let mut k_plus = pos[0];
        let mut best_far = f64::NEG_INFINITY;
        for &k in pos {
            let pk = p[k].as_ref().ok_or(CoreError::Empty("positive-set vector"))?;
            let d = cosine_distance(pi, pk)?;
            if d > best_far {
                best_far = d;
                k_plus = k;
            }
        }
        let mut k_minus = neg[0];
        let mut best_near = f64::INFINITY;
        for &k in neg {
            let pk = p[k].as_ref().ok_or(CoreError::Empty("negative-set vector"))?;
            let d = cosine_distance(pi, pk)?;
            if d < best_near {
                best_near = d;
                k_minus = k;
            }
        }
        out.push(TripletSelection {
            anchor: i,
            k_plus: Some(k_plus),
            k_minus: Some(k_minus),
            skipped: None,
        });
    }
    Ok(out)
}

/// Sum of hinge terms `[margin + d(q_i, q_k+) - d(q_i, q_k-)]_+` over
/// active anchors, plus gradients w.r.t. the same vectors. The gradient
/// at an exactly-zero hinge argument is zero, and the selections are held
/// constant.
pub fn triplet_loss(
    selections: &[TripletSelection],
    q: &[Option<Vec<f64>>],
    margin: f64,
) -> Result<(f64, Vec<Option<Vec<f64>>>)> {
    let mut grads: Vec<Option<Vec<f64>>> =
        q.iter().map(|v| v.as_ref().map(|v| vec![0.0; v.len()])).collect();
    let mut loss = 0.0;
    for sel in selections {
        if !sel.is_active() {
            continue;
        }
        let i = sel.anchor;
        let kp = sel.k_plus.expect("active selection has k_plus");
        let km = sel.k_minus.expect("active selection has k_minus");
        let qi = q[i].as_ref().ok_or(CoreError::Empty("anchor vector"))?;
        let qp = q[kp].as_ref().ok_or(CoreError::Empty("positive vector"))?;
        let qm = q[km].as_ref().ok_or(CoreError::Empty("negative vector"))?;
        let d_plus = cosine_distance(qi, qp)?;
        let d_minus = cosine_distance(qi, qm)?;
        let term = margin + d_plus - d_minus;
        if term > 0.0 {
            loss += term;
            let (da_p, db_p) = cosine_distance_grad(qi, qp);
            let (da_m, db_m) = cosine_distance_grad(qi, qm);
            let gi = grads[i].as_mut().expect("participant gradient slot");
            for ((g, dp), dm) in gi.iter_mut().zip(&da_p).zip(&da_m) {
                *g += dp - dm;
            }
            let gp = grads[kp].as_mut().expect("participant gradient slot");
            for (g, d) in gp.iter_mut().zip(&db_p) {
                *g += d;
            }
            let gm = grads[km].as_mut().expect("participant gradient slot");
            for (g, d) in gm.iter_mut().zip(&db_m) {
                *g -= d;
            }
        }
    }
    Ok((loss, grads))
}

/// Weighted total: l_ssl + sum_j weight_j * l_meta_j. Streams with zero
/// weight are skipped outright so an all-zero weighting reproduces the
/// SSL loss bit for bit.
pub fn combined_loss(l_ssl: f64, l_meta: &[f64], weights: &[f64]) -> Result<f64> {
    if l_meta.len() != weights.len() {
        return Err(CoreError::ShapeMismatch {
            context: "stream losses vs weights",
            expected: weights.len(),
            got: l_meta.len(),
        });
    }
    if !l_ssl.is_finite() {
        return Err(CoreError::NonFinite { term: String::from("l_ssl") });
    }
    let mut total = l_ssl;
    for (j, (&lm, &w)) in l_meta.iter().zip(weights).enumerate() {
        if !lm.is_finite() {
            return Err(CoreError::NonFinite { term: format!("l_meta[{j}]") });
        }
        if w != 0.0 {
            total += w * lm;
        }
    }
    if !total.is_finite() {
        return Err(CoreError::NonFinite { term: String::from("l_masr") });
    }
    Ok(total)
}

/// Fraction of active anchors whose hardest negative changes when mining
/// on the concatenated vectors p instead of the projections q alone.
/// Returns 0 when no anchor is active.
pub fn selection_change_rate(
    q: &[Option<Vec<f64>>],
    p: &[Option<Vec<f64>>],
    sets: &[(Vec<usize>, Vec<usize>)],
) -> Result<f64> {
    let on_p = mine(p, sets)?;
    let on_q = mine(q, sets)?;
    let mut active = 0usize;
    let mut changed = 0usize;
    for (a, b) in on_p.iter().zip(&on_q) {
        if a.is_active() && b.is_active() {
            active += 1;
            if a.k_minus != b.k_minus {
                changed += 1;
            }
        }
    }
    if active == 0 {
        return Ok(0.0);
    }
    Ok(changed as f64 / active as f64)
}
