//! Adam-style optimizer with an explicit storage-precision mode.
//!
//! All arithmetic runs in f64. In 32-bit mode every parameter and moment
//! is snapped onto the f32 grid after initialization and after each
//! update, reproducing single-precision training storage while keeping
//! one code path. Gradient checking requires 64-bit mode.

use crate::error::{CoreError, Result};
use crate::model::Params;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    /// Full f64 storage; the mode gradient verification runs in.
    Float64,
    /// Parameters and moments round-trip through f32 after every update.
    Float32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub precision: Precision,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            precision: Precision::Float32,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(CoreError::OutOfRange { what: "learning rate", value: self.lr });
        }
        for (what, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(v.is_finite() && (0.0..1.0).contains(&v)) {
                return Err(CoreError::OutOfRange { what, value: v });
            }
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(CoreError::OutOfRange { what: "adam epsilon", value: self.eps });
        }
        Ok(())
    }
}

/// Optimizer state: first/second moments shaped like the parameters, plus
/// the update counter for bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    m: Params,
    v: Params,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, template: &Params) -> Self {
        Adam { cfg, m: template.zeros_like(), v: template.zeros_like(), t: 0 }
    }

    /// Rebuild from checkpointed state.
    pub fn from_state(cfg: AdamConfig, m: Params, v: Params, t: u64) -> Self {
        Adam { cfg, m, v, t }
    }

    pub fn moments(&self) -> (&Params, &Params) {
        (&self.m, &self.v)
    }

    pub fn updates_applied(&self) -> u64 {
        self.t
    }

    /// One update over every tensor, in enumeration order.
    pub fn step(&mut self, params: &mut Params, grads: &Params) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.cfg.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.cfg.beta2, self.t as f64);
        let mut mts = self.m.tensors_mut();
        let mut vts = self.v.tensors_mut();
        let mut pts = params.tensors_mut();
        let gts = grads.tensors();
        if mts.len() != pts.len() || gts.len() != pts.len() {
            return Err(CoreError::ShapeMismatch {
                context: "optimizer tensor sets",
                expected: pts.len(),
                got: gts.len().min(mts.len()),
            });
        }
        for idx in 0..pts.len() {
            let (pn, p) = &mut pts[idx];
            let (_, m) = &mut mts[idx];
            let (_, v) = &mut vts[idx];
            let (gn, g) = &gts[idx];
            if p.len() != g.len() || pn != gn {
                return Err(CoreError::ShapeMismatch {
                    context: "optimizer tensor shape",
                    expected: p.len(),
                    got: g.len(),
                });
            }
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = self.cfg.beta1 * m[i] + (1.0 - self.cfg.beta1) * gi;
                v[i] = self.cfg.beta2 * v[i] + (1.0 - self.cfg.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.cfg.lr * m_hat / (libm::sqrt(v_hat) + self.cfg.eps);
                if self.cfg.precision == Precision::Float32 {
                    m[i] = m[i] as f32 as f64;
                    v[i] = v[i] as f32 as f64;
                    p[i] = p[i] as f32 as f64;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BackboneConfig, Params};

    fn one_param() -> Params {
        let cfg = BackboneConfig {
            mel_bins: 1,
            stack: 1,
            context: 0,
            blocks: 0,
            d_z: 1,
            codebook_size: 1,
            d_c: 1,
            ..BackboneConfig::default()
        };
        // Only the head bias matters here; everything else is minimal.
        Params::seeded(&cfg, &[], 0)
    }

    fn set_all(p: &mut Params, value: f64) {
        for (_, t) in p.tensors_mut() {
            t.fill(value);
        }
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        let mut params = one_param();
        set_all(&mut params, 5.0);
        let mut grads = params.zeros_like();
        set_all(&mut grads, 3.0);
        let cfg = AdamConfig { precision: Precision::Float64, ..AdamConfig::default() };
        let mut opt = Adam::new(cfg, &params);
        opt.step(&mut params, &grads).unwrap();
        // m_hat = g, v_hat = g^2 on the first step, so the move is
        // lr * g / (|g| + eps) ~ lr.
        for (_, t) in params.tensors() {
            for &v in t {
                assert!((v - (5.0 - 1e-3)).abs() < 1e-9, "{v}");
            }
        }
    }

    #[test]
    fn quadratic_descends() {
        let mut params = one_param();
        set_all(&mut params, 2.0);
        let cfg = AdamConfig { precision: Precision::Float64, lr: 0.05, ..AdamConfig::default() };
        let mut opt = Adam::new(cfg, &params);
        let mut grads = params.zeros_like();
        for _ in 0..300 {
            let x = params.head.b[0];
            set_all(&mut grads, x); // d/dx of 0.5 x^2
            opt.step(&mut params, &grads).unwrap();
        }
        assert!(params.head.b[0].abs() < 0.1);
    }

    #[test]
    fn f32_mode_keeps_storage_on_grid() {
        let mut params = one_param();
        params.round_to_f32();
        let mut grads = params.zeros_like();
        set_all(&mut grads, 0.123456789);
        let mut opt = Adam::new(AdamConfig::default(), &params);
        for _ in 0..3 {
            opt.step(&mut params, &grads).unwrap();
        }
        for (_, t) in params.tensors() {
            for &v in t {
                assert_eq!(v, v as f32 as f64);
            }
        }
        let (m, v) = opt.moments();
        for (_, t) in m.tensors().iter().chain(v.tensors().iter()) {
            for &x in *t {
                assert_eq!(x, x as f32 as f64);
            }
        }
    }

    #[test]
    fn steps_are_deterministic() {
        let run = || {
            let mut params = one_param();
            let mut grads = params.zeros_like();
            set_all(&mut grads, -0.7);
            let mut opt = Adam::new(AdamConfig::default(), &params);
            for _ in 0..10 {
                opt.step(&mut params, &grads).unwrap();
            }
            params.fingerprint()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn config_validation() {
        let mut c = AdamConfig::default();
        assert!(c.validate().is_ok());
        c.lr = 0.0;
        assert!(c.validate().is_err());
        c.lr = 1e-3;
        c.beta1 = 1.0;
        assert!(c.validate().is_err());
    }
}
