//! End-to-end checks of the `unlearn` binary: output layout, determinism of
//! corpus generation across processes, report parseability, and the exit-code
//! contract for each failure class.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lingtea::harness::parse_report_csv;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_unlearn"))
}

fn run(args: &[&str]) -> Output {
    binary().args(args).output().expect("spawn unlearn")
}

fn write_file(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).expect("write config");
    path
}

/// A complete experiment small enough that `run` finishes in seconds.
fn experiment_text(out: &Path) -> String {
    format!(
        "\
name = smoke
method = lingtea
recipe = single
seeds = 0
out = {}

[corpus]
languages = aa:high, bb:low
vocab_size = 64
min_len = 4
max_len = 6
forget_size = 6
retain_size = 6
validation_size = 4
test_size = 4
pretrain_base = 8
cloze_candidates = 3
function_tokens = 4
seed = 5

[model]
vocab_size = 64
d_model = 16
n_layers = 1
n_heads = 2
max_seq_len = 12

[unlearn]
learning_rate = 5e-4
batch_size = 3
retain_sample_count = 4
max_epochs = 1
early_stop_tolerance = 2

[pretrain]
learning_rate = 1e-2
batch_size = 8
max_epochs = 8
memorization_threshold = 0.01
",
        out.display()
    )
}

fn corpus_spec_text(out_unused: &Path) -> String {
    let _ = out_unused;
    "\
[corpus]
languages = aa:high, bb:low
vocab_size = 64
min_len = 4
max_len = 6
forget_size = 6
retain_size = 6
validation_size = 4
test_size = 4
pretrain_base = 8
cloze_candidates = 3
function_tokens = 4
seed = 9
"
    .to_string()
}

fn tree_bytes(dir: &Path) -> Vec<(std::path::PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(std::path::PathBuf, Vec<u8>)>) {
        let mut entries: Vec<_> = fs::read_dir(dir)
            .expect("read_dir")
            .map(|e| e.expect("entry").path())
            .collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push((
                    p.strip_prefix(root).expect("relative").to_path_buf(),
                    fs::read(&p).expect("read"),
                ));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out
}

// ── Corpus generation ───────────────────────────────────────────────────────

#[test]
fn gen_corpus_is_byte_deterministic_across_processes() {
    let dir = tempfile::tempdir().expect("tempdir");
    let spec = write_file(dir.path(), "corpus.toml", &corpus_spec_text(dir.path()));
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let out_c = dir.path().join("c");

    for out in [&out_a, &out_b] {
        let r = run(&[
            "gen-corpus",
            "--spec",
            spec.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    }
    // A different seed must change the bytes.
    let r = run(&[
        "gen-corpus",
        "--spec",
        spec.to_str().unwrap(),
        "--seed",
        "10",
        "--out",
        out_c.to_str().unwrap(),
    ]);
    assert!(r.status.success());

    assert_eq!(tree_bytes(&out_a), tree_bytes(&out_b));
    assert_ne!(tree_bytes(&out_a), tree_bytes(&out_c));
}

// ── Experiment runs ─────────────────────────────────────────────────────────

#[test]
fn run_writes_the_documented_layout_with_parseable_reports() {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = dir.path().join("out");
    let config = write_file(dir.path(), "exp.toml", &experiment_text(&out));

    let r = run(&["run", "--config", config.to_str().unwrap()]);
    assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));

    let root = out.join("smoke");
    for file in ["summary.csv", "summary.md", "config.txt"] {
        assert!(root.join(file).is_file(), "missing {file}");
    }
    let seed_dir = root.join("0");
    for file in ["report.csv", "history.jsonl", "checkpoint"] {
        assert!(seed_dir.join(file).is_file(), "missing 0/{file}");
    }

    // Both CSVs parse back and the per-seed report leads with the original
    // model's rows.
    let report = fs::read_to_string(seed_dir.join("report.csv")).expect("read report");
    let rows = parse_report_csv(&report).expect("parse report");
    assert!(!rows.is_empty());
    assert_eq!(rows[0].method, "Original");
    assert!(rows.iter().any(|r| r.method != "Original"));

    let summary = fs::read_to_string(root.join("summary.csv")).expect("read summary");
    let summary_rows = parse_report_csv(&summary).expect("parse summary");
    assert!(!summary_rows.is_empty());

    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(stdout.contains("summary.csv"), "stdout: {stdout}");
}

#[test]
fn run_applies_method_and_out_overrides() {
    let dir = tempfile::tempdir().expect("tempdir");
    let ignored_out = dir.path().join("ignored");
    let real_out = dir.path().join("real");
    let config = write_file(dir.path(), "exp.toml", &experiment_text(&ignored_out));

    let r = run(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--method",
        "grad_ascent_plus",
        "--out",
        real_out.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    assert!(!ignored_out.exists());
    assert!(real_out.join("smoke").join("3").join("report.csv").is_file());

    let report =
        fs::read_to_string(real_out.join("smoke").join("3").join("report.csv")).unwrap();
    let rows = parse_report_csv(&report).expect("parse");
    assert!(rows.iter().any(|r| r.method == "grad_ascent_plus"));
}

// ── Exit codes ──────────────────────────────────────────────────────────────

#[test]
fn unknown_config_key_exits_with_the_configuration_code() {
    let dir = tempfile::tempdir().expect("tempdir");
    let text = experiment_text(&dir.path().join("out")).replace("lambda", "lambada");
    let text = text.replace("[unlearn]", "[unlearn]\nlambada = 2.0\n");
    let config = write_file(dir.path(), "exp.toml", &text);

    let r = run(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains("lambada"), "stderr: {stderr}");
    assert!(stderr.contains("exp.toml"), "stderr must name the file: {stderr}");
}

#[test]
fn missing_corpus_directory_exits_with_the_data_code() {
    let dir = tempfile::tempdir().expect("tempdir");
    let text = experiment_text(&dir.path().join("out"));
    let head = text.split("[model]").nth(0).unwrap();
    let tail = text.split("[model]").nth(1).unwrap();
    let replaced_corpus = "\
[corpus]
path = /nonexistent/corpus-dir
tokenizer = ids

[model]";
    let mut lines: Vec<&str> = head.lines().take_while(|l| !l.starts_with("[corpus]")).collect();
    lines.push(replaced_corpus);
    let text = format!("{}\n{}", lines.join("\n"), tail);
    let config = write_file(dir.path(), "exp.toml", &text);

    let r = run(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn failed_memorization_exits_with_the_numeric_code() {
    let dir = tempfile::tempdir().expect("tempdir");
    // One pretraining epoch cannot reach a 0.99 memorization floor.
    let text = experiment_text(&dir.path().join("out"))
        .replace("memorization_threshold = 0.01", "memorization_threshold = 0.99")
        .replace("max_epochs = 8\n", "max_epochs = 1\n");
    let config = write_file(dir.path(), "exp.toml", &text);

    let r = run(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(4), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains("memorization") || stderr.contains("threshold"), "stderr: {stderr}");
}

#[test]
fn usage_errors_exit_with_the_cli_code() {
    let r = run(&["frobnicate"]);
    assert_eq!(r.status.code(), Some(2));

    let dir = tempfile::tempdir().expect("tempdir");
    let config = write_file(dir.path(), "exp.toml", &experiment_text(&dir.path().join("out")));
    let r = run(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--method",
        "not_a_method",
    ]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn gen_corpus_rejects_path_sources() {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = write_file(
        dir.path(),
        "corpus.toml",
        "[corpus]\npath = /somewhere\ntokenizer = ids\n",
    );
    let r = run(&[
        "gen-corpus",
        "--spec",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains("synthetic"), "stderr: {stderr}");
}
