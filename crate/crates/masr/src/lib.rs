//! Operator-facing companion to `masr-core`: file formats, configuration,
//! corpus handling, the training and probing drivers, and the `masr` CLI.
//!
//! Everything numeric lives in the core crate; this crate owns IO and
//! orchestration. All file formats are deterministic — no timestamps, no
//! environment-dependent bytes — so identical inputs and seeds produce
//! byte-identical outputs.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod diag;
pub mod error;
pub mod featfile;
pub mod logfile;
pub mod manifest;
pub mod prober;
pub mod trainer;
pub mod wav;

pub use error::{MasrError, Result};
