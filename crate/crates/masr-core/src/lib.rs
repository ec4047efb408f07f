//! Numeric core for metadata-aware speech representation learning.
//!
//! Everything in this crate is pure computation over in-memory data: the
//! log-mel front end, the random-quantizer masked-prediction objective, the
//! fixed metadata encoders, per-stream hard-triplet mining and losses, the
//! optimizer, the finite-difference gradient checker, and the linear-probe
//! evaluation metrics. File formats, configuration, and the CLI live in the
//! companion `masr` crate.
//!
//! The crate is `no_std` (with `alloc`) and routes all transcendental math
//! through `libm`, so results are bit-identical across platforms given the
//! same seeds.

#![no_std]

extern crate alloc;

pub mod batching;
pub mod eval;
pub mod features;
pub mod gradcheck;
pub mod loss;
pub mod mat;
pub mod metadata;
pub mod model;
pub mod optim;
pub mod rng;
pub mod ssl;
pub mod step;
pub mod synth;

mod error;

pub use error::{CoreError, Result};
pub use features::FeatureMatrix;
pub use model::{ModelState, Params};
pub use step::{LossReport, StreamReport};
