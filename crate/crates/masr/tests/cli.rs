//! End-to-end exercises of the `masr` binary: the full pipeline on a
//! small corpus, idempotence of every subcommand, and the error
//! contract (single JSON line on stderr, nonzero exit).

use std::path::Path;
use std::process::{Command, Output};

fn masr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_masr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output, context: &str) {
    assert!(
        out.status.success(),
        "{context} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// A config small enough that the whole pipeline runs in seconds.
const SMALL_CONFIG: &str = r#"
[features]
mel_bins = 6

[backbone]
d_z = 12
codebook_size = 8
d_c = 4

[data.synth]
num_languages = 3
utterances_per_language = 8
frames = 10

[[data.synth.confusable_pairs]]
a = 0
b = 1
epsilon = 0.2

[[streams]]
name = "language"
kind = "langvec"
table = "langvec.tsv"
d_q = 8

[training]
batch_size = 8
phase1_steps = 12
phase2_steps = 6
"#;

fn write_config(dir: &Path) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, SMALL_CONFIG).unwrap();
    path.to_string_lossy().into_owned()
}

/// Byte-level directory comparison over the files we expect.
fn read_all(dir: &Path, names: &[&str]) -> Vec<Vec<u8>> {
    names.iter().map(|n| std::fs::read(dir.join(n)).unwrap()).collect()
}

#[test]
fn full_pipeline_runs_and_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let corpus = tmp.path().join("corpus");
    let run = tmp.path().join("run");
    let evald = tmp.path().join("eval");
    let diag = tmp.path().join("diag");
    let corpus_s = corpus.to_string_lossy().into_owned();
    let manifest_s = corpus.join("manifest.jsonl").to_string_lossy().into_owned();
    let run_s = run.to_string_lossy().into_owned();
    let ckpt_s = run.join("model.ckpt").to_string_lossy().into_owned();

    assert_ok(&masr(&["synth", "--config", &config, "--out", &corpus_s]), "synth");
    assert_ok(
        &masr(&[
            "pretrain", "--config", &config, "--manifest", &manifest_s, "--out", &run_s,
        ]),
        "pretrain",
    );
    let probe_out = masr(&[
        "probe", "--config", &config, "--manifest", &manifest_s,
        "--checkpoint", &ckpt_s, "--out", &evald.to_string_lossy(),
        "--threads", "2",
    ]);
    assert_ok(&probe_out, "probe");
    assert!(String::from_utf8_lossy(&probe_out.stdout).contains("probe accuracy"));
    let diag_out = masr(&[
        "diag-mining", "--config", &config, "--manifest", &manifest_s,
        "--checkpoint", &ckpt_s, "--out", &diag.to_string_lossy(),
    ]);
    assert_ok(&diag_out, "diag-mining");
    assert!(String::from_utf8_lossy(&diag_out.stdout).contains("mean_change_rate"));

    let corpus_files = ["manifest.jsonl", "langvec.tsv", "features/lang00_000.feat"];
    let run_files = ["model.ckpt", "metrics.jsonl", "config.toml"];
    let eval_files = ["report.jsonl", "confusion.csv"];
    let diag_files = ["change_rate.csv", "mining_summary.jsonl"];
    let first = (
        read_all(&corpus, &corpus_files),
        read_all(&run, &run_files),
        read_all(&evald, &eval_files),
        read_all(&diag, &diag_files),
    );

    // Rerun everything into the same directories: byte-identical.
    assert_ok(&masr(&["synth", "--config", &config, "--out", &corpus_s]), "synth again");
    assert_ok(
        &masr(&[
            "pretrain", "--config", &config, "--manifest", &manifest_s, "--out", &run_s,
        ]),
        "pretrain again",
    );
    assert_ok(
        &masr(&[
            "probe", "--config", &config, "--manifest", &manifest_s,
            "--checkpoint", &ckpt_s, "--out", &evald.to_string_lossy(),
        ]),
        "probe again",
    );
    assert_ok(
        &masr(&[
            "diag-mining", "--config", &config, "--manifest", &manifest_s,
            "--checkpoint", &ckpt_s, "--out", &diag.to_string_lossy(),
        ]),
        "diag again",
    );
    let second = (
        read_all(&corpus, &corpus_files),
        read_all(&run, &run_files),
        read_all(&evald, &eval_files),
        read_all(&diag, &diag_files),
    );
    assert_eq!(first, second, "rerun changed some output bytes");

    // Resuming from the finished checkpoint is a no-op that leaves every
    // artifact untouched.
    assert_ok(
        &masr(&[
            "pretrain", "--config", &config, "--manifest", &manifest_s,
            "--out", &run_s, "--checkpoint", &ckpt_s,
        ]),
        "no-op resume",
    );
    assert_eq!(read_all(&run, &run_files), first.1);
}

#[test]
fn gradcheck_command_passes_on_a_small_config() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let out = masr(&["gradcheck", "--config", &config]);
    assert_ok(&out, "gradcheck");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("gradcheck pass"), "{stdout}");
    assert!(stdout.contains("head.w"), "per-tensor lines missing: {stdout}");
}

#[test]
fn errors_are_single_json_lines_with_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();

    // Missing config file.
    let out = masr(&["synth", "--config", "/nonexistent/config.toml", "--out", "x"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.trim().lines().count(), 1, "stderr: {stderr}");
    let parsed: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(parsed["kind"], "io");
    assert!(parsed["error"].as_str().unwrap().contains("config.toml"));

    // Two unknown keys: both named in one error.
    let bad = tmp.path().join("bad.toml");
    std::fs::write(
        &bad,
        "[training]\nnot_a_key = 1\n\n[backbone]\nalso_not_one = 3\n",
    )
    .unwrap();
    let out = masr(&["synth", "--config", &bad.to_string_lossy(), "--out", "x"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let parsed: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(parsed["kind"], "config");
    let message = parsed["error"].as_str().unwrap();
    assert!(message.contains("training.not_a_key"), "{message}");
    assert!(message.contains("backbone.also_not_one"), "{message}");

    // Two bad values: both named in one error.
    let worse = tmp.path().join("worse.toml");
    std::fs::write(
        &worse,
        "[training]\nbatch_size = 1\nlearning_rate = 0.0\n",
    )
    .unwrap();
    let out = masr(&["synth", "--config", &worse.to_string_lossy(), "--out", "x"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let parsed: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(parsed["kind"], "config");
    let message = parsed["error"].as_str().unwrap();
    assert!(message.contains("batch_size"), "{message}");
    assert!(message.contains("learning_rate"), "{message}");
}

#[test]
fn checkpoint_from_other_config_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let corpus = tmp.path().join("corpus");
    let run = tmp.path().join("run");
    let manifest_s = corpus.join("manifest.jsonl").to_string_lossy().into_owned();
    assert_ok(
        &masr(&["synth", "--config", &config, "--out", &corpus.to_string_lossy()]),
        "synth",
    );
    assert_ok(
        &masr(&[
            "pretrain", "--config", &config, "--manifest", &manifest_s,
            "--out", &run.to_string_lossy(),
        ]),
        "pretrain",
    );

    // Same config text but a different seed -> different hash.
    let out = masr(&[
        "probe", "--config", &config, "--manifest", &manifest_s,
        "--checkpoint", &run.join("model.ckpt").to_string_lossy(),
        "--out", &tmp.path().join("eval").to_string_lossy(),
        "--seed", "999",
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let parsed: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(parsed["kind"], "config_hash_mismatch");
}

#[test]
fn help_lists_every_subcommand_and_flag() {
    let out = masr(&["--help"]);
    assert_ok(&out, "--help");
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["synth", "pretrain", "probe", "diag-mining", "gradcheck"] {
        assert!(text.contains(sub), "missing {sub} in: {text}");
    }
    let probe_help = masr(&["probe", "--help"]);
    let text = String::from_utf8_lossy(&probe_help.stdout);
    for flag in ["--config", "--out", "--checkpoint", "--manifest", "--seed", "--threads"] {
        assert!(text.contains(flag), "missing {flag} in: {text}");
    }
}

#[test]
fn thread_count_env_override_is_honored_and_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let corpus = tmp.path().join("corpus");
    let run = tmp.path().join("run");
    let manifest_s = corpus.join("manifest.jsonl").to_string_lossy().into_owned();
    let ckpt_s = run.join("model.ckpt").to_string_lossy().into_owned();
    assert_ok(
        &masr(&["synth", "--config", &config, "--out", &corpus.to_string_lossy()]),
        "synth",
    );
    assert_ok(
        &masr(&[
            "pretrain", "--config", &config, "--manifest", &manifest_s,
            "--out", &run.to_string_lossy(),
        ]),
        "pretrain",
    );

    let ok = Command::new(env!("CARGO_BIN_EXE_masr"))
        .args([
            "probe", "--config", &config, "--manifest", &manifest_s,
            "--checkpoint", &ckpt_s,
            "--out", &tmp.path().join("eval_env").to_string_lossy(),
        ])
        .env("MASR_THREADS", "3")
        .output()
        .unwrap();
    assert_ok(&ok, "probe with MASR_THREADS=3");

    let bad = Command::new(env!("CARGO_BIN_EXE_masr"))
        .args([
            "probe", "--config", &config, "--manifest", &manifest_s,
            "--checkpoint", &ckpt_s,
            "--out", &tmp.path().join("eval_bad").to_string_lossy(),
        ])
        .env("MASR_THREADS", "zero")
        .output()
        .unwrap();
    assert!(!bad.status.success());
    let stderr = String::from_utf8_lossy(&bad.stderr);
    assert!(stderr.contains("MASR_THREADS"), "{stderr}");
}
