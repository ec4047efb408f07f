//! Command-line surface.
//!
//! Five subcommands wire the config file to the pipeline: `synth`
//! generates the synthetic corpus, `pretrain` runs the two-phase loop,
//! `probe` evaluates a checkpoint with a frozen-encoder probe,
//! `diag-mining` reports hard-negative selection behavior, and
//! `gradcheck` verifies analytic gradients against finite differences.
//! Hyperparameters live in the config file; flags carry only paths, the
//! seed override, and the thread count. Every command is deterministic
//! given its inputs — rerunning writes byte-identical files.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use masr_core::gradcheck::{batch_is_well_conditioned, grad_check, GradCheckReport, MIN_GAP};
use masr_core::model::ModelState;
use masr_core::rng::{derive_seed, SeedRng};
use masr_core::ssl::MaskPlan;
use masr_core::step::{PreparedBatch, PreparedItem, StreamDatum};
use masr_core::FeatureMatrix;

use crate::checkpoint::load_checkpoint;
use crate::config::RunConfig;
use crate::corpus::{load_corpus, synthesize_to_dir, Corpus};
use crate::diag::{mining_diagnostics, write_diagnostics};
use crate::error::{io_err, MasrError, Result};
use crate::prober::{resolve_threads, run_probe, write_probe_outputs};
use crate::trainer::{train, TrainOptions};

#[derive(Debug, Parser)]
#[command(
    name = "masr",
    version,
    about = "Metadata-aware speech representation training and evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus: feature files, manifest, and the
    /// language-vector fixture table.
    Synth(SynthArgs),
    /// Two-phase pretraining; writes checkpoint, metrics log, and a copy
    /// of the effective config.
    Pretrain(PretrainArgs),
    /// Frozen-encoder probe evaluation of a checkpoint.
    Probe(ProbeArgs),
    /// Per-batch hard-negative selection diagnostics for a checkpoint.
    DiagMining(DiagMiningArgs),
    /// Finite-difference verification of all analytic gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for the corpus.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the config's training seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (checkpoint, metrics log, config echo).
    #[arg(long)]
    pub out: PathBuf,
    /// Corpus manifest; overrides the config's data.manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Resume from this checkpoint instead of initializing.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Override the config's training seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (report, optional confusion CSV).
    #[arg(long)]
    pub out: PathBuf,
    /// Checkpoint to evaluate.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Corpus manifest; overrides the config's data.manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Override the config's training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for embedding extraction (default: MASR_THREADS
    /// environment variable, else 1).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DiagMiningArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (change-rate CSV, summary).
    #[arg(long)]
    pub out: PathBuf,
    /// Checkpoint whose mining behavior to diagnose.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Corpus manifest; overrides the config's data.manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Override the config's training seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Override the config's training seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Read, parse, and validate a config file, applying the seed override
/// before anything derives from it.
pub fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut config = RunConfig::parse(&text)?;
    if let Some(seed) = seed {
        config.training.seed = seed;
    }
    Ok(config)
}

/// Manifest resolution: the flag wins; a config-provided path is taken
/// relative to the config file's directory.
fn manifest_path(
    config: &RunConfig,
    config_path: &Path,
    flag: Option<&Path>,
) -> Result<PathBuf> {
    if let Some(p) = flag {
        return Ok(p.to_path_buf());
    }
    match &config.data.manifest {
        Some(rel) => {
            let base = config_path.parent().unwrap_or(Path::new("."));
            Ok(base.join(rel))
        }
        None => Err(MasrError::Missing(
            "corpus manifest (pass --manifest or set data.manifest)".into(),
        )),
    }
}

fn load_corpus_for(
    config: &RunConfig,
    config_path: &Path,
    flag: Option<&Path>,
) -> Result<Corpus> {
    let manifest = manifest_path(config, config_path, flag)?;
    load_corpus(&manifest, config)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let config = load_config(&args.config, args.seed)?;
    let manifest = synthesize_to_dir(&config, &args.out)?;
    println!("synth wrote {}", manifest.display());
    Ok(())
}

pub fn cmd_pretrain(args: &PretrainArgs) -> Result<()> {
    let config = load_config(&args.config, args.seed)?;
    let corpus = load_corpus_for(&config, &args.config, args.manifest.as_deref())?;
    std::fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;

    let resume = match &args.checkpoint {
        Some(path) => Some(load_checkpoint(path, &config)?),
        None => None,
    };
    let ckpt_path = args.out.join("model.ckpt");
    let result = train(
        &config,
        &corpus,
        TrainOptions {
            resume,
            stop_after: None,
            metrics_path: Some(args.out.join("metrics.jsonl")),
            checkpoint_path: Some(ckpt_path.clone()),
        },
    )?;

    // Echo the effective config so the run reproduces from its own
    // output directory alone.
    let echo = args.out.join("config.toml");
    std::fs::write(&echo, config.to_toml()).map_err(io_err(&echo))?;

    let last = result.log.last();
    println!(
        "pretrain complete steps {} l_masr {} checkpoint {}",
        result.checkpoint.step,
        last.map_or(f64::NAN, |r| r.l_masr),
        ckpt_path.display()
    );
    Ok(())
}

pub fn cmd_probe(args: &ProbeArgs) -> Result<()> {
    let config = load_config(&args.config, args.seed)?;
    let corpus = load_corpus_for(&config, &args.config, args.manifest.as_deref())?;
    let ckpt = load_checkpoint(&args.checkpoint, &config)?;
    let threads = resolve_threads(args.threads)?;
    let report = run_probe(&ckpt.model, &corpus, &config, threads)?;
    write_probe_outputs(&args.out, &report, config.eval.confusion_csv)?;
    println!(
        "probe accuracy {:.4} macro_f1 {:.4} eer {:.4} eval_items {}",
        report.accuracy, report.macro_f1, report.eer, report.num_eval
    );
    Ok(())
}

pub fn cmd_diag_mining(args: &DiagMiningArgs) -> Result<()> {
    let config = load_config(&args.config, args.seed)?;
    let corpus = load_corpus_for(&config, &args.config, args.manifest.as_deref())?;
    let ckpt = load_checkpoint(&args.checkpoint, &config)?;
    let diag = mining_diagnostics(&ckpt.model, &corpus, &config)?;
    write_diagnostics(&args.out, &diag)?;
    for s in &diag.summary {
        println!(
            "diag stream {} mean_change_rate {:.4} batches {} active_anchors {}",
            s.stream, s.mean_change_rate, s.batches, s.total_active_anchors
        );
    }
    Ok(())
}

/// Gradient-check tolerance used by the command and the test harness.
pub const GRADCHECK_TOL: f64 = 1e-4;

/// One gradient-check run: model, batch geometry, and the verdict.
pub struct GradcheckOutcome {
    pub report: GradCheckReport,
    pub batch_size: usize,
    pub frames: usize,
    /// Batches drawn until one sat clear of hinge kinks and selection
    /// boundaries.
    pub attempts: usize,
    /// False when this instance exercised the self-supervised path only.
    pub with_streams: bool,
}

/// Build and verify one random instance. The instance index varies the
/// batch size, sequence length, and stream participation; every fifth
/// instance drops the metadata streams entirely and checks the
/// self-supervised path alone.
pub fn gradcheck_instance(config: &RunConfig, instance: u64) -> Result<GradcheckOutcome> {
    let ssl_only = instance % 5 == 4;
    let streams = if ssl_only { Vec::new() } else { config.stream_configs() };
    let proj_dims: Vec<usize> = streams.iter().map(|s| s.d_q).collect();
    let cfg = config.backbone_config();
    let root = derive_seed(config.training.seed, "gradcheck", instance);
    let model = ModelState::init(cfg, &proj_dims, derive_seed(root, "model", 0));

    let batch_size = 3 + (instance as usize % 4);
    let frames = model.cfg.stack * (3 + instance as usize % 3);
    for attempt in 0..64 {
        let batch = random_batch(
            &model,
            batch_size,
            frames,
            streams.len(),
            derive_seed(root, "attempt", attempt),
        )?;
        if !batch_is_well_conditioned(&batch, &model, &streams, MIN_GAP)? {
            continue;
        }
        let report = grad_check(&batch, &model, &streams, !streams.is_empty(), GRADCHECK_TOL)?;
        return Ok(GradcheckOutcome {
            report,
            batch_size,
            frames,
            attempts: attempt as usize + 1,
            with_streams: !streams.is_empty(),
        });
    }
    Err(MasrError::Missing(
        "well-conditioned gradient-check batch after 64 draws".into(),
    ))
}

/// Random features, alternating labels, unit random metadata encodings;
/// one in eight items sits a stream out.
fn random_batch(
    model: &ModelState,
    batch_size: usize,
    frames: usize,
    n_streams: usize,
    seed: u64,
) -> Result<PreparedBatch> {
    const ENCODING_DIM: usize = 6;
    let mut rng = SeedRng::from_seed(seed);
    let mut items = Vec::with_capacity(batch_size);
    for i in 0..batch_size {
        let data: Vec<f64> =
            (0..frames * model.cfg.mel_bins).map(|_| rng.normal()).collect();
        let features = FeatureMatrix::from_vec(frames, model.cfg.mel_bins, data)?;
        let targets = model.quantizer.quantize_targets(&features)?;
        let t_s = targets.len();
        let mask = MaskPlan::from_indices(t_s, &[0, 2.min(t_s - 1)])?;
        let mut streams = Vec::with_capacity(n_streams);
        for _ in 0..n_streams {
            // Draw the encoding before deciding absence so the stream of
            // random numbers stays aligned across items.
            let mut e: Vec<f64> = (0..ENCODING_DIM).map(|_| rng.normal()).collect();
            let absent = rng.uniform() < 0.125;
            if absent {
                streams.push(StreamDatum::absent());
            } else {
                masr_core::mat::l2_normalize(&mut e, "gradcheck encoding")?;
                streams.push(StreamDatum::present(i % 2, e));
            }
        }
        items.push(PreparedItem { features, targets, mask, streams });
    }
    Ok(PreparedBatch { items })
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<()> {
    let config = load_config(&args.config, args.seed)?;
    let outcome = gradcheck_instance(&config, 0)?;
    for t in &outcome.report.tensors {
        println!(
            "{} max_rel_err {:.3e} {}",
            t.name,
            t.max_rel_err,
            if t.max_rel_err <= outcome.report.tolerance { "ok" } else { "FAIL" }
        );
    }
    if outcome.report.pass {
        println!(
            "gradcheck pass tolerance {:e} batch_size {} frames {} attempts {}",
            outcome.report.tolerance, outcome.batch_size, outcome.frames, outcome.attempts
        );
        Ok(())
    } else {
        Err(MasrError::CheckFailed(format!(
            "gradient mismatch above {:e} in: {}",
            outcome.report.tolerance,
            outcome.report.failing().join(", ")
        )))
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Pretrain(args) => cmd_pretrain(args),
        Command::Probe(args) => cmd_probe(args),
        Command::DiagMining(args) => cmd_diag_mining(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    }
}
