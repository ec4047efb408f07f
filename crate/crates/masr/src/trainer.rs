//! Two-phase pretraining loop.
//!
//! Phase 1 trains the self-supervised objective alone; phase 2 adds the
//! weighted metadata losses. All randomness is functional: the batch
//! plan for epoch e and the mask plan for (step, batch slot) each come
//! from seeds derived on demand, so no mutable generator threads
//! through the loop. Resuming from a checkpoint therefore needs only
//! (parameters, optimizer moments, step counter) to continue the exact
//! trajectory an uninterrupted run would have produced.

use std::path::PathBuf;

use masr_core::model::ModelState;
use masr_core::optim::{Adam, Precision};
use masr_core::rng::derive_seed;
use masr_core::step::{masr_batch_loss, PreparedBatch, PreparedItem};
use masr_core::ssl::MaskPlan;
use masr_core::CoreError;

use crate::checkpoint::{save_checkpoint, Checkpoint};
use crate::config::RunConfig;
use crate::corpus::Corpus;
use crate::error::{MasrError, Result};
use crate::logfile::{LogRecord, MetricsLog};

/// Optional side effects of a run; the default trains fresh, in memory.
#[derive(Default)]
pub struct TrainOptions {
    /// Continue from this state instead of initializing.
    pub resume: Option<Checkpoint>,
    /// Pause after this many total steps (counted from step 1, not from
    /// the resume point); the returned checkpoint resumes the rest.
    pub stop_after: Option<u64>,
    /// Metrics log destination; appended to when resuming, else created.
    pub metrics_path: Option<PathBuf>,
    /// Checkpoint destination (periodic per config, plus final).
    pub checkpoint_path: Option<PathBuf>,
}

#[derive(Debug)]
pub struct TrainResult {
    pub checkpoint: Checkpoint,
    /// Records for the steps *this call* executed, in order.
    pub log: Vec<LogRecord>,
}

fn attribute_nan(step: u64) -> impl FnOnce(CoreError) -> MasrError {
    move |e| match e {
        CoreError::NonFinite { term } => MasrError::NonFiniteLoss { step, term },
        other => MasrError::Core(other),
    }
}

/// Seeds of the fixed character tables, in stream order, text streams only.
pub fn char_table_seeds(config: &RunConfig) -> Vec<u64> {
    config
        .streams
        .iter()
        .enumerate()
        .filter(|(_, s)| s.kind == "text")
        .map(|(j, _)| derive_seed(config.training.seed, "chartable", j as u64))
        .collect()
}

/// Run training to completion (or to `stop_after`).
pub fn train(config: &RunConfig, corpus: &Corpus, options: TrainOptions) -> Result<TrainResult> {
    let adam_cfg = config.adam_config();
    adam_cfg.validate()?;
    let streams = config.stream_configs();
    let proj_dims: Vec<usize> = streams.iter().map(|s| s.d_q).collect();
    let seed = config.training.seed;
    let config_hash = config.hash();

    let resuming = options.resume.is_some();
    let (mut model, mut adam, start_step) = match options.resume {
        Some(ckpt) => {
            if ckpt.config_hash != config_hash {
                return Err(MasrError::ConfigHashMismatch {
                    expected: config_hash,
                    got: ckpt.config_hash,
                });
            }
            let adam = Adam::from_state(adam_cfg, ckpt.adam_m, ckpt.adam_v, ckpt.adam_t);
            (ckpt.model, adam, ckpt.step)
        }
        None => {
            let mut model = ModelState::init(config.backbone_config(), &proj_dims, seed);
            if adam_cfg.precision == Precision::Float32 {
                model.params.round_to_f32();
            }
            let adam = Adam::new(adam_cfg, &model.params);
            (model, adam, 0)
        }
    };

    let mut metrics = match &options.metrics_path {
        Some(path) if resuming => Some(MetricsLog::append(path)?),
        Some(path) => Some(MetricsLog::create(path)?),
        None => None,
    };

    // The quantizer is frozen, so every utterance's targets are as well.
    let targets: Vec<Vec<usize>> = corpus
        .items
        .iter()
        .map(|item| model.quantizer.quantize_targets(&item.features))
        .collect::<masr_core::Result<_>>()?;
    let labels = corpus.language_labels();

    let batch_size = config.training.batch_size;
    let batches_per_epoch = labels.len() / batch_size;
    if batches_per_epoch == 0 {
        return Err(MasrError::Core(CoreError::BatchTooLarge {
            batch: batch_size,
            records: labels.len(),
        }));
    }

    let phase1 = config.training.phase1_steps as u64;
    let total = phase1 + config.training.phase2_steps as u64;
    let until = options.stop_after.map_or(total, |s| s.min(total));
    let mut grads = model.params.zeros_like();
    let mut log = Vec::new();
    let mut epoch_plan: Option<(u64, Vec<Vec<usize>>)> = None;

    for step_idx in start_step..until {
        let epoch = step_idx / batches_per_epoch as u64;
        if epoch_plan.as_ref().map(|(e, _)| *e) != Some(epoch) {
            let plan = masr_core::batching::plan_batches(
                &labels,
                batch_size,
                derive_seed(seed, "batches", epoch),
                config.balance_strategy(),
            )?;
            epoch_plan = Some((epoch, plan.batches));
        }
        let batches = &epoch_plan.as_ref().unwrap().1;
        let members = &batches[(step_idx % batches_per_epoch as u64) as usize];

        let mask_root = derive_seed(seed, "mask", step_idx);
        let batch = PreparedBatch {
            items: members
                .iter()
                .enumerate()
                .map(|(slot, &r)| PreparedItem {
                    features: corpus.items[r].features.clone(),
                    targets: targets[r].clone(),
                    mask: MaskPlan::sample(
                        targets[r].len(),
                        model.cfg.mask_prob,
                        model.cfg.mask_span,
                        derive_seed(mask_root, "item", slot as u64),
                    ),
                    streams: corpus.items[r].streams.clone(),
                })
                .collect(),
        };

        let step = step_idx + 1;
        let phase: u8 = if step_idx < phase1 { 1 } else { 2 };
        let report = masr_batch_loss(&batch, &model, &streams, phase == 2, &mut grads)
            .map_err(attribute_nan(step))?;
        adam.step(&mut model.params, &grads)?;

        let record = LogRecord::from_report(step, phase, &report);
        if let Some(metrics) = &mut metrics {
            metrics.write(&record)?;
        }
        log.push(record);

        let every = config.training.checkpoint_every as u64;
        if every > 0 && step % every == 0 && step < until {
            if let Some(path) = &options.checkpoint_path {
                save_checkpoint(path, &snapshot(config, &config_hash, step, &model, &adam))?;
            }
        }
    }

    let checkpoint = snapshot(config, &config_hash, until, &model, &adam);
    if let Some(path) = &options.checkpoint_path {
        save_checkpoint(path, &checkpoint)?;
    }
    Ok(TrainResult { checkpoint, log })
}

fn snapshot(
    config: &RunConfig,
    config_hash: &str,
    step: u64,
    model: &ModelState,
    adam: &Adam,
) -> Checkpoint {
    let (m, v) = adam.moments();
    Checkpoint {
        config_hash: config_hash.to_string(),
        char_table_seeds: char_table_seeds(config),
        step,
        model: model.clone(),
        adam_m: m.clone(),
        adam_v: v.clone(),
        adam_t: adam.updates_applied(),
    }
}
