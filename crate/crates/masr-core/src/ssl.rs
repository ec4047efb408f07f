//! Masked-prediction pretraining: fixed random quantizer, span masking,
//! the context encoder, pooling, and the masked cross-entropy objective.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::features::FeatureMatrix;
use crate::mat::Mat;
use crate::model::{Affine, BackboneConfig, Params};
use crate::rng::SeedRng;

/// Fixed (never trained) random projection plus codebook that supplies
/// discrete prediction targets. Fully determined by its seed and shape.
#[derive(Debug, Clone)]
pub struct Quantizer {
    /// (F * S) x d_c, applied as y = x^T P.
    projection: Mat,
    /// V x d_c, rows l2-normalized.
    codebook: Mat,
    stack: usize,
    seed: u64,
}

impl Quantizer {
    /// Draw projection then codebook from one seeded stream, in that order,
    /// and normalize the codebook rows.
    pub fn generate(seed: u64, input_dim: usize, d_c: usize, v: usize, stack: usize) -> Self {
        let mut rng = SeedRng::from_seed(seed);
        let projection = Mat::gaussian(input_dim, d_c, 1.0, &mut rng);
        let mut codebook = Mat::gaussian(v, d_c, 1.0, &mut rng);
        for r in 0..v {
            // Zero draws have probability zero; normalize unconditionally.
            crate::mat::l2_normalize(codebook.row_mut(r), "codebook row")
                .expect("gaussian row is nonzero");
        }
        Quantizer { projection, codebook, stack, seed }
    }

    /// Assemble from explicit tensors (tests, checkpoints). Codebook rows
    /// are re-normalized; a zero row is rejected.
    pub fn from_parts(projection: Mat, mut codebook: Mat, stack: usize, seed: u64) -> Result<Self> {
        if projection.cols() != codebook.cols() {
            return Err(CoreError::ShapeMismatch {
                context: "quantizer projection vs codebook",
                expected: projection.cols(),
                got: codebook.cols(),
            });
        }
        for r in 0..codebook.rows() {
            crate::mat::l2_normalize(codebook.row_mut(r), "codebook row")?;
        }
        Ok(Quantizer { projection, codebook, stack, seed })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stack(&self) -> usize {
        self.stack
    }

    pub fn projection(&self) -> &Mat {
        &self.projection
    }

    pub fn codebook(&self) -> &Mat {
        &self.codebook
    }

    pub fn codebook_size(&self) -> usize {
        self.codebook.rows()
    }

    /// Discrete target per step: project the stacked frame vector,
    /// l2-normalize, and take the nearest codebook row by Euclidean
    /// distance. Ties resolve to the lowest index.
    pub fn quantize_targets(&self, features: &FeatureMatrix) -> Result<Vec<usize>> {
        if features.frames() < self.stack {
            return Err(CoreError::TooFewFrames {
                frames: features.frames(),
                stack: self.stack,
            });
        }
        if features.mel_bins() * self.stack != self.projection.rows() {
            return Err(CoreError::ShapeMismatch {
                context: "quantizer input dim",
                expected: self.projection.rows(),
                got: features.mel_bins() * self.stack,
            });
        }
        let t_s = features.num_steps(self.stack);
        let d_c = self.projection.cols();
        let mut targets = Vec::with_capacity(t_s);
        let mut y = vec![0.0; d_c];
        for t in 0..t_s {
            let x = features.stacked(self.stack, t);
            for c in 0..d_c {
                let mut acc = 0.0;
                for (f, &xf) in x.iter().enumerate() {
                    acc += xf * self.projection.get(f, c);
                }
                y[c] = acc;
            }
            // An exactly-zero projection cannot be normalized; leave it as
            // the origin, which is equidistant from every unit row and so
            // still resolves deterministically to index 0.
            let _ = crate::mat::l2_normalize(&mut y, "projected step");
            let mut best = 0usize;
            let mut best_d2 = f64::INFINITY;
            for v in 0..self.codebook.rows() {
                let row = self.codebook.row(v);
                let mut d2 = 0.0;
                for (a, b) in y.iter().zip(row) {
                    let d = a - b;
                    d2 += d * d;
                }
                if d2 < best_d2 {
                    best_d2 = d2;
                    best = v;
                }
            }
            targets.push(best);
        }
        Ok(targets)
    }
}

/// Which encoder steps are masked for one utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPlan {
    masked: Vec<bool>,
}

impl MaskPlan {
    /// Span masking: every step independently starts a span of `span`
    /// steps with probability `p`, spans clip at the sequence end, and
    /// overlapping spans merge.
    pub fn sample(t_s: usize, p: f64, span: usize, seed: u64) -> Self {
        let mut rng = SeedRng::from_seed(seed);
        let mut masked = vec![false; t_s];
        for t in 0..t_s {
            if rng.uniform() < p {
                for m in masked.iter_mut().skip(t).take(span) {
                    *m = true;
                }
            }
        }
        MaskPlan { masked }
    }

    /// No masking; used for representation extraction.
    pub fn empty(t_s: usize) -> Self {
        MaskPlan { masked: vec![false; t_s] }
    }

    pub fn from_indices(t_s: usize, indices: &[usize]) -> Result<Self> {
        let mut masked = vec![false; t_s];
        for &i in indices {
            if i >= t_s {
                return Err(CoreError::OutOfRange { what: "mask index", value: i as f64 });
            }
            masked[i] = true;
        }
        Ok(MaskPlan { masked })
    }

    pub fn steps(&self) -> usize {
        self.masked.len()
    }

    pub fn is_masked(&self, t: usize) -> bool {
        self.masked[t]
    }

    pub fn masked_indices(&self) -> Vec<usize> {
        (0..self.masked.len()).filter(|&t| self.masked[t]).collect()
    }

    pub fn masked_count(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }
}

/// Every intermediate the encoder produces; the backward pass replays it.
#[derive(Debug, Clone)]
pub struct EncodeTrace {
    /// T_s x (F * S): stacked inputs after mask-embedding replacement.
    pub input: Mat,
    /// Post-tanh output of each block, T_s x d_z.
    pub hidden: Vec<Mat>,
}

impl EncodeTrace {
    /// The frame representations Z (last block output, or the masked
    /// input itself when the encoder is an identity passthrough).
    pub fn output(&self) -> &Mat {
        self.hidden.last().unwrap_or(&self.input)
    }
}

/// Run the encoder: stack frames, substitute the mask embedding at masked
/// steps, then apply each affine+tanh block over a +/-C step context window
/// with zero padding at the edges.
pub fn encode(
    features: &FeatureMatrix,
    mask: &MaskPlan,
    params: &Params,
    cfg: &BackboneConfig,
) -> Result<EncodeTrace> {
    if features.mel_bins() != cfg.mel_bins {
        return Err(CoreError::ShapeMismatch {
            context: "encoder mel bins",
            expected: cfg.mel_bins,
            got: features.mel_bins(),
        });
    }
    if features.frames() < cfg.stack {
        return Err(CoreError::TooFewFrames { frames: features.frames(), stack: cfg.stack });
    }
    let t_s = features.num_steps(cfg.stack);
    if mask.steps() != t_s {
        return Err(CoreError::ShapeMismatch {
            context: "mask length vs encoder steps",
            expected: t_s,
            got: mask.steps(),
        });
    }
    let step_dim = cfg.step_dim();
    if params.mask_embed.len() != step_dim {
        return Err(CoreError::ShapeMismatch {
            context: "mask embedding dim",
            expected: step_dim,
            got: params.mask_embed.len(),
        });
    }
    if params.blocks.len() != cfg.blocks {
        return Err(CoreError::ShapeMismatch {
            context: "block count",
            expected: cfg.blocks,
            got: params.blocks.len(),
        });
    }

    let mut input = Mat::zeros(t_s, step_dim);
    for t in 0..t_s {
        let row = input.row_mut(t);
        if mask.is_masked(t) {
            row.copy_from_slice(&params.mask_embed);
        } else {
            row.copy_from_slice(&features.stacked(cfg.stack, t));
        }
    }

    let mut hidden = Vec::with_capacity(cfg.blocks);
    let mut ctx = vec![0.0; 0];
    for (l, block) in params.blocks.iter().enumerate() {
        let in_dim = cfg.block_in_dim(l);
        if block.in_dim() != in_dim || block.out_dim() != cfg.d_z {
            return Err(CoreError::ShapeMismatch {
                context: "block shape",
                expected: in_dim,
                got: block.in_dim(),
            });
        }
        ctx.resize(in_dim, 0.0);
        let prev: &Mat = if l == 0 { &input } else { &hidden[l - 1] };
        let mut h = Mat::zeros(t_s, cfg.d_z);
        for t in 0..t_s {
            gather_context(prev, t, cfg.context, &mut ctx);
            block.apply(&ctx, h.row_mut(t));
            for v in h.row_mut(t) {
                *v = libm::tanh(*v);
            }
        }
        hidden.push(h);
    }
    Ok(EncodeTrace { input, hidden })
}

/// Concatenate rows t-c ..= t+c of `src`, zero-filling out-of-range steps.
fn gather_context(src: &Mat, t: usize, c: usize, out: &mut [f64]) {
    let width = src.cols();
    for (slot, off) in (-(c as isize)..=c as isize).enumerate() {
        let dst = &mut out[slot * width..(slot + 1) * width];
        let s = t as isize + off;
        if s >= 0 && (s as usize) < src.rows() {
            dst.copy_from_slice(src.row(s as usize));
        } else {
            dst.fill(0.0);
        }
    }
}

/// Scatter-add the reverse of [`gather_context`]: out-of-range slots drop.
fn scatter_context(dst: &mut Mat, t: usize, c: usize, d_ctx: &[f64]) {
    let width = dst.cols();
    for (slot, off) in (-(c as isize)..=c as isize).enumerate() {
        let s = t as isize + off;
        if s >= 0 && (s as usize) < dst.rows() {
            let row = dst.row_mut(s as usize);
            for (r, g) in row.iter_mut().zip(&d_ctx[slot * width..(slot + 1) * width]) {
                *r += g;
            }
        }
    }
}

/// Push a gradient w.r.t. Z back through the blocks, accumulating block
/// and mask-embedding gradients into `grads`. Feature inputs are fixed, so
/// only masked rows of the input propagate (into the mask embedding).
pub fn encode_backward(
    trace: &EncodeTrace,
    mask: &MaskPlan,
    params: &Params,
    cfg: &BackboneConfig,
    dz: &Mat,
    grads: &mut Params,
) {
    let t_s = trace.input.rows();
    let mut d_cur = dz.clone();
    let mut ctx = vec![0.0; 0];
    for l in (0..params.blocks.len()).rev() {
        let block = &params.blocks[l];
        let h = &trace.hidden[l];
        let prev: &Mat = if l == 0 { &trace.input } else { &trace.hidden[l - 1] };
        let in_dim = block.in_dim();
        ctx.resize(in_dim, 0.0);
        let mut d_prev = Mat::zeros(t_s, prev.cols());
        let mut d_pre = vec![0.0; block.out_dim()];
        let mut d_ctx = vec![0.0; in_dim];
        for t in 0..t_s {
            for (dp, (&dh, &hv)) in
                d_pre.iter_mut().zip(d_cur.row(t).iter().zip(h.row(t)))
            {
                *dp = dh * (1.0 - hv * hv);
            }
            gather_context(prev, t, cfg.context, &mut ctx);
            let gb = &mut grads.blocks[l];
            for (o, &dp) in d_pre.iter().enumerate() {
                gb.b[o] += dp;
                let wrow = gb.w.row_mut(o);
                for (wi, &xi) in wrow.iter_mut().zip(&ctx) {
                    *wi += dp * xi;
                }
            }
            d_ctx.fill(0.0);
            block.w.matvec_t_accum(&d_pre, &mut d_ctx);
            scatter_context(&mut d_prev, t, cfg.context, &d_ctx);
        }
        d_cur = d_prev;
    }
    // d_cur is now the gradient w.r.t. the (post-replacement) input rows.
    for t in 0..t_s {
        if mask.is_masked(t) {
            for (g, &d) in grads.mask_embed.iter_mut().zip(d_cur.row(t)) {
                *g += d;
            }
        }
    }
}

/// Mean of the frame representations over steps.
pub fn pool(z: &Mat) -> Result<Vec<f64>> {
    if z.rows() == 0 {
        return Err(CoreError::Empty("pooling over zero steps"));
    }
    let inv = 1.0 / z.rows() as f64;
    let mut h = vec![0.0; z.cols()];
    for t in 0..z.rows() {
        for (acc, &v) in h.iter_mut().zip(z.row(t)) {
            *acc += v;
        }
    }
    for v in &mut h {
        *v *= inv;
    }
    Ok(h)
}

/// Forward state of the masked cross-entropy: per-masked-step softmax
/// probabilities, kept so the backward pass can rescale by any batch-level
/// normalizer.
#[derive(Debug, Clone)]
pub struct MaskedCe {
    /// Sum of per-step cross-entropies over masked steps.
    pub ce_sum: f64,
    pub count: usize,
    /// (step, softmax over codebook) for each masked step, in step order.
    pub probs: Vec<(usize, Vec<f64>)>,
}

/// Cross-entropy of the head's softmax against the quantizer targets,
/// evaluated at masked steps only.
pub fn masked_ce(
    z: &Mat,
    targets: &[usize],
    mask: &MaskPlan,
    head: &Affine,
) -> Result<MaskedCe> {
    if targets.len() != z.rows() || mask.steps() != z.rows() {
        return Err(CoreError::ShapeMismatch {
            context: "targets/mask vs steps",
            expected: z.rows(),
            got: targets.len().min(mask.steps()),
        });
    }
    if head.in_dim() != z.cols() {
        return Err(CoreError::ShapeMismatch {
            context: "head input dim",
            expected: z.cols(),
            got: head.in_dim(),
        });
    }
    let v = head.out_dim();
    let mut ce_sum = 0.0;
    let mut probs = Vec::new();
    let mut logits = vec![0.0; v];
    for t in 0..z.rows() {
        if !mask.is_masked(t) {
            continue;
        }
        let target = targets[t];
        if target >= v {
            return Err(CoreError::OutOfRange { what: "quantizer target", value: target as f64 });
        }
        head.apply(z.row(t), &mut logits);
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        let mut p = vec![0.0; v];
        for (pi, &l) in p.iter_mut().zip(&logits) {
            *pi = libm::exp(l - max);
            denom += *pi;
        }
        for pi in &mut p {
            *pi /= denom;
        }
        ce_sum += libm::log(denom) - (logits[target] - max);
        probs.push((t, p));
    }
    Ok(MaskedCe { ce_sum, count: probs.len(), probs })
}

/// Backward of [`masked_ce`] with an explicit loss scale (1/N for a batch
/// mean over N masked steps). Adds into `d_head` and `dz`.
pub fn masked_ce_backward(
    z: &Mat,
    ce: &MaskedCe,
    targets: &[usize],
    scale: f64,
    head: &Affine,
    d_head: &mut Affine,
    dz: &mut Mat,
) {
    let v = head.out_dim();
    let mut d_logit = vec![0.0; v];
    for (t, p) in &ce.probs {
        for (dl, &pi) in d_logit.iter_mut().zip(p) {
            *dl = pi * scale;
        }
        d_logit[targets[*t]] -= scale;
        let zt = z.row(*t);
        for (o, &dl) in d_logit.iter().enumerate() {
            d_head.b[o] += dl;
            let wrow = d_head.w.row_mut(o);
            for (wi, &zi) in wrow.iter_mut().zip(zt) {
                *wi += dl * zi;
            }
        }
        head.w.matvec_t_accum(&d_logit, dz.row_mut(*t));
    }
}

/// One utterance's masked-prediction loss: mean cross-entropy over its
/// masked steps, or zero (flagged) when nothing is masked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SslLossReport {
    pub loss: f64,
    pub masked_steps: usize,
    pub empty_mask: bool,
}

pub fn ssl_loss(
    z: &Mat,
    targets: &[usize],
    mask: &MaskPlan,
    head: &Affine,
) -> Result<SslLossReport> {
    let ce = masked_ce(z, targets, mask, head)?;
    if ce.count == 0 {
        return Ok(SslLossReport { loss: 0.0, masked_steps: 0, empty_mask: true });
    }
    Ok(SslLossReport {
        loss: ce.ce_sum / ce.count as f64,
        masked_steps: ce.count,
        empty_mask: false,
    })
}
