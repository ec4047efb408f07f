//! Learnable parameters and fixed seeded artifacts.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::mat::Mat;
use crate::rng::{derive_seed, fingerprint_f64, SeedRng};
use crate::ssl::Quantizer;

/// Architecture of the masked-prediction backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneConfig {
    /// Mel bins per frame (F).
    pub mel_bins: usize,
    /// Frames stacked per encoder step (S).
    pub stack: usize,
    /// Context steps on each side fed to every block (C).
    pub context: usize,
    /// Number of affine+tanh blocks (L). Zero means identity passthrough.
    pub blocks: usize,
    /// Output dimension of each block.
    pub d_z: usize,
    /// Codebook size (V).
    pub codebook_size: usize,
    /// Quantizer projection output dimension.
    pub d_c: usize,
    /// Probability that a step starts a mask span.
    pub mask_prob: f64,
    /// Mask span length in steps.
    pub mask_span: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            mel_bins: 40,
            stack: 2,
            context: 1,
            blocks: 2,
            d_z: 64,
            codebook_size: 64,
            d_c: 16,
            mask_prob: 0.1,
            mask_span: 2,
        }
    }
}

impl BackboneConfig {
    /// Dimension of one stacked step vector (F * S).
    pub fn step_dim(&self) -> usize {
        self.mel_bins * self.stack
    }

    /// Dimension of the frame representations z_t.
    pub fn d_out(&self) -> usize {
        if self.blocks == 0 {
            self.step_dim()
        } else {
            self.d_z
        }
    }

    /// Input width of block `l` (context window over the previous layer).
    pub fn block_in_dim(&self, l: usize) -> usize {
        let prev = if l == 0 { self.step_dim() } else { self.d_z };
        (2 * self.context + 1) * prev
    }
}

/// Affine map `y = W x + b` with `W` stored row-major (out x in).
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub w: Mat,
    pub b: Vec<f64>,
}

impl Affine {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Affine { w: Mat::zeros(out_dim, in_dim), b: vec![0.0; out_dim] }
    }

    /// Gaussian weights scaled by 1/sqrt(in_dim), zero bias.
    pub fn seeded(out_dim: usize, in_dim: usize, rng: &mut SeedRng) -> Self {
        let scale = 1.0 / libm::sqrt(in_dim as f64);
        Affine { w: Mat::gaussian(out_dim, in_dim, scale, rng), b: vec![0.0; out_dim] }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.w.matvec(x, out);
        for (o, b) in out.iter_mut().zip(&self.b) {
            *o += b;
        }
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }
}

/// All trainable tensors, in a fixed enumeration order used by the
/// optimizer, the gradient checker, and the checkpoint format.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub blocks: Vec<Affine>,
    /// Replaces the stacked input vector at masked steps (length F * S).
    pub mask_embed: Vec<f64>,
    /// Softmax head over codebook targets (V x d_out).
    pub head: Affine,
    /// Per-stream projection d_out -> d_q.
    pub projections: Vec<Affine>,
}

impl Params {
    pub fn seeded(cfg: &BackboneConfig, proj_dims: &[usize], seed: u64) -> Self {
        let mut rng = SeedRng::from_seed(seed);
        let blocks = (0..cfg.blocks)
            .map(|l| Affine::seeded(cfg.d_z, cfg.block_in_dim(l), &mut rng))
            .collect();
        let mask_embed: Vec<f64> = {
            let scale = 1.0 / libm::sqrt(cfg.step_dim() as f64);
            (0..cfg.step_dim()).map(|_| rng.normal() * scale).collect()
        };
        let head = Affine::seeded(cfg.codebook_size, cfg.d_out(), &mut rng);
        let projections = proj_dims
            .iter()
            .map(|&d_q| Affine::seeded(d_q, cfg.d_out(), &mut rng))
            .collect();
        Params { blocks, mask_embed, head, projections }
    }

    pub fn zeros_like(&self) -> Self {
        Params {
            blocks: self
                .blocks
                .iter()
                .map(|a| Affine::zeros(a.out_dim(), a.in_dim()))
                .collect(),
            mask_embed: vec![0.0; self.mask_embed.len()],
            head: Affine::zeros(self.head.out_dim(), self.head.in_dim()),
            projections: self
                .projections
                .iter()
                .map(|a| Affine::zeros(a.out_dim(), a.in_dim()))
                .collect(),
        }
    }

    /// Named views over every tensor, in enumeration order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (i, a) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.w"), a.w.data()));
            out.push((format!("block{i}.b"), a.b.as_slice()));
        }
        out.push((String::from("mask_embed"), self.mask_embed.as_slice()));
        out.push((String::from("head.w"), self.head.w.data()));
        out.push((String::from("head.b"), self.head.b.as_slice()));
        for (j, a) in self.projections.iter().enumerate() {
            out.push((format!("proj{j}.w"), a.w.data()));
            out.push((format!("proj{j}.b"), a.b.as_slice()));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        for (i, a) in self.blocks.iter_mut().enumerate() {
            let Affine { w, b } = a;
            out.push((format!("block{i}.w"), w.data_mut()));
            out.push((format!("block{i}.b"), b.as_mut_slice()));
        }
        out.push((String::from("mask_embed"), self.mask_embed.as_mut_slice()));
        let Affine { w, b } = &mut self.head;
        out.push((String::from("head.w"), w.data_mut()));
        out.push((String::from("head.b"), b.as_mut_slice()));
        for (j, a) in self.projections.iter_mut().enumerate() {
            let Affine { w, b } = a;
            out.push((format!("proj{j}.w"), w.data_mut()));
            out.push((format!("proj{j}.b"), b.as_mut_slice()));
        }
        out
    }

    /// Deterministic content hash over all tensor bit patterns.
    pub fn fingerprint(&self) -> u64 {
        fingerprint_f64(
            self.tensors().into_iter().flat_map(|(_, t)| t.to_vec()),
        )
    }

    /// Snap every value onto the f32 grid (storage precision of 32-bit mode).
    pub fn round_to_f32(&mut self) {
        for (_, t) in self.tensors_mut() {
            for v in t.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
    }
}

/// Model: architecture, trainable parameters, and the fixed quantizer.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub cfg: BackboneConfig,
    pub params: Params,
    pub quantizer: Quantizer,
}

impl ModelState {
    /// Build a freshly initialized model. The quantizer and the parameters
    /// draw from independent sub-seeds of `seed`.
    pub fn init(cfg: BackboneConfig, proj_dims: &[usize], seed: u64) -> Self {
        let quantizer = Quantizer::generate(
            derive_seed(seed, "quantizer", 0),
            cfg.step_dim(),
            cfg.d_c,
            cfg.codebook_size,
            cfg.stack,
        );
        let params = Params::seeded(&cfg, proj_dims, derive_seed(seed, "params", 0));
        ModelState { cfg, params, quantizer }
    }
}
