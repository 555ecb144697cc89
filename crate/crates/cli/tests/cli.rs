//! End-to-end tests of the `veritask` binary: exit codes, error
//! wording, and byte-level determinism of everything a run writes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use veritask::corpus::write_jsonl;
use veritask::evaluation::{ExperimentReport, FoldScores};
use veritask::synthetic::{claim_sentences, news_corpus};
use veritask_cli::experiment::{RunMeta, RunSummary};

fn veritask_bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_veritask"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary starts")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn assert_fails_with(out: &Output, code: i32, needle: &str) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains(needle),
        "stderr should mention {needle:?}: {stderr}"
    );
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// 240 articles over 12 sources (2 per category, 20 articles each).
fn write_news(dir: &Path) -> PathBuf {
    let path = dir.join("news.jsonl");
    write_jsonl(&path, &news_corpus(240, 2, 3)).unwrap();
    path
}

fn write_claims(dir: &Path) -> PathBuf {
    let path = dir.join("claims.jsonl");
    write_jsonl(&path, &claim_sentences(120, 3)).unwrap();
    path
}

#[test]
fn stats_prints_the_category_table() {
    let dir = tempfile::tempdir().unwrap();
    write_news(dir.path());
    let out = veritask_bin(dir.path(), &["stats", "news.jsonl"]);
    assert_ok(&out);
    let table = stdout(&out);
    assert!(table.starts_with("source_type,articles,sources,mean_body_tokens,mean_title_tokens"));
    assert!(table.contains("satire,40,2,"), "table: {table}");
    assert!(table.contains("bias_right,40,2,"), "table: {table}");
}

#[test]
fn malformed_input_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_news(dir.path());
    let text = fs::read_to_string(&path).unwrap();
    let good: Vec<&str> = text.lines().take(2).collect();
    fs::write(
        dir.path().join("broken.jsonl"),
        format!("{}\n{}\n{{not json\n", good[0], good[1]),
    )
    .unwrap();
    let out = veritask_bin(dir.path(), &["stats", "broken.jsonl"]);
    assert_fails_with(&out, 2, "line 3");
}

#[test]
fn split_rejects_the_claim_protocol() {
    let dir = tempfile::tempdir().unwrap();
    write_claims(dir.path());
    fs::write(
        dir.path().join("claim.manifest"),
        "name = claim-run\nprotocol = claim\nmodel = svm\nclaims = claims.jsonl\n",
    )
    .unwrap();
    let out = veritask_bin(dir.path(), &["split", "--manifest", "claim.manifest"]);
    assert_fails_with(&out, 2, "train/test tags");
}

#[test]
fn evaluate_without_checkpoints_names_the_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    write_news(dir.path());
    fs::write(
        dir.path().join("run.manifest"),
        "name = svm-run\nprotocol = unseen_source\nmodel = svm\narticles = news.jsonl\nseed = 5\n",
    )
    .unwrap();
    assert_ok(&veritask_bin(dir.path(), &["split", "--manifest", "run.manifest"]));
    let out = veritask_bin(dir.path(), &["evaluate", "--manifest", "run.manifest"]);
    assert_fails_with(&out, 2, "vocab.ngrams");
    assert_fails_with(&out, 2, "train-baseline");
}

#[test]
fn unknown_manifest_key_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    write_news(dir.path());
    fs::write(
        dir.path().join("bad.manifest"),
        "name = x\nprotocol = forecasting\nmodel = svm\narticles = news.jsonl\ncolour = blue\n",
    )
    .unwrap();
    let out = veritask_bin(dir.path(), &["split", "--manifest", "bad.manifest"]);
    assert_fails_with(&out, 2, "colour");
}

#[test]
fn train_commands_reject_the_wrong_model_family() {
    let dir = tempfile::tempdir().unwrap();
    write_news(dir.path());
    fs::write(
        dir.path().join("svm.manifest"),
        "name = a\nprotocol = unseen_source\nmodel = svm\narticles = news.jsonl\n",
    )
    .unwrap();
    fs::write(
        dir.path().join("single.manifest"),
        "name = b\nprotocol = unseen_source\nmodel = single\narticles = news.jsonl\n",
    )
    .unwrap();
    let out = veritask_bin(dir.path(), &["train-mtl", "--manifest", "svm.manifest"]);
    assert_fails_with(&out, 2, "train-baseline");
    let out = veritask_bin(dir.path(), &["train-baseline", "--manifest", "single.manifest"]);
    assert_fails_with(&out, 2, "train-mtl");
}

#[test]
fn empty_choice_dataset_is_a_task_failure() {
    let dir = tempfile::tempdir().unwrap();
    write_news(dir.path());
    fs::write(dir.path().join("csqa.jsonl"), "").unwrap();
    fs::write(
        dir.path().join("desk.cfg"),
        "pretrain_steps = 0\nepochs = 1\nvocab_size = 256\nbatch_size = 8\nlearning_rate = 0.1\n",
    )
    .unwrap();
    fs::write(
        dir.path().join("mtl.manifest"),
        "name = mtl-run\nprotocol = forecasting\nmodel = mtl\narticles = news.jsonl\n\
         csqa = csqa.jsonl\nconfig = desk.cfg\n",
    )
    .unwrap();
    assert_ok(&veritask_bin(dir.path(), &["split", "--manifest", "mtl.manifest"]));
    let out = veritask_bin(dir.path(), &["train-mtl", "--manifest", "mtl.manifest"]);
    assert_fails_with(&out, 2, "csqa");
}

#[test]
fn ingest_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    write_news(dir.path());
    assert_ok(&veritask_bin(
        dir.path(),
        &["ingest", "news.jsonl", "--out", "c1", "--seed", "9"],
    ));
    assert_ok(&veritask_bin(
        dir.path(),
        &["ingest", "news.jsonl", "--out", "c2", "--seed", "9"],
    ));
    for file in ["articles.jsonl", "stats.csv"] {
        let a = fs::read(dir.path().join("c1").join(file)).unwrap();
        let b = fs::read(dir.path().join("c2").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical ingest runs");
    }
}

#[test]
fn svm_run_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    write_news(dir.path());
    fs::write(
        dir.path().join("run.manifest"),
        "name = svm-run\nprotocol = unseen_source\nmodel = svm\narticles = news.jsonl\nseed = 11\n",
    )
    .unwrap();
    let pipeline = |_: ()| {
        assert_ok(&veritask_bin(dir.path(), &["split", "--manifest", "run.manifest"]));
        assert_ok(&veritask_bin(dir.path(), &["train-baseline", "--manifest", "run.manifest"]));
        assert_ok(&veritask_bin(dir.path(), &["evaluate", "--manifest", "run.manifest"]));
    };
    pipeline(());
    let run = dir.path().join("runs").join("svm-run");
    let files = [
        "folds.jsonl",
        "fold0/model.svm",
        "fold0/vocab.ngrams",
        "fold0/report.csv",
        "aggregate.json",
        "aggregate.md",
        "scores.csv",
    ];
    let before: Vec<Vec<u8>> = files.iter().map(|f| fs::read(run.join(f)).unwrap()).collect();
    pipeline(());
    for (file, old) in files.iter().zip(&before) {
        let new = fs::read(run.join(file)).unwrap();
        assert_eq!(&new, old, "{file} changed across identical reruns");
    }
}

#[test]
fn claim_pipeline_reports_and_merges() {
    let dir = tempfile::tempdir().unwrap();
    write_claims(dir.path());
    fs::write(
        dir.path().join("claim.manifest"),
        "name = claim-run\nprotocol = claim\nmodel = svm\nclaims = claims.jsonl\n",
    )
    .unwrap();
    assert_ok(&veritask_bin(dir.path(), &["train-baseline", "--manifest", "claim.manifest"]));
    assert_ok(&veritask_bin(dir.path(), &["evaluate", "--manifest", "claim.manifest"]));
    let out = veritask_bin(dir.path(), &["report", "runs/claim-run"]);
    assert_ok(&out);
    let grid = stdout(&out);
    assert!(grid.contains("## claim"), "grid: {grid}");
    assert!(grid.contains("| Model | NFS | UFS | CFS | F1-Macro |"), "grid: {grid}");
    assert!(grid.contains("| svm |"), "grid: {grid}");
}

/// `report` computes the paired single-vs-mtl test from stored fold
/// scores without retraining anything.
#[test]
fn report_adds_significance_when_both_encoder_runs_exist() {
    let dir = tempfile::tempdir().unwrap();
    let labels: Vec<String> = ["satire", "conspiracy", "propaganda", "neutral", "bias_left", "bias_right"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let truth: Vec<String> = labels.clone();
    let write_run = |name: &str, model: &str, scores: Vec<f64>| {
        let mut report = ExperimentReport::from_predictions(&truth, &truth, &labels).unwrap();
        report.folds = Some(FoldScores::from_scores(scores).unwrap());
        let summary = RunSummary {
            meta: RunMeta {
                name: name.to_string(),
                protocol: "unseen_source".to_string(),
                model: model.to_string(),
                features: "merged".to_string(),
                seed: 0,
            },
            report,
        };
        let run = dir.path().join(name);
        fs::create_dir_all(&run).unwrap();
        fs::write(
            run.join("aggregate.json"),
            serde_json::to_string_pretty(&summary).unwrap(),
        )
        .unwrap();
    };
    write_run("run-single", "single", vec![44.0, 45.0, 46.0, 47.0, 48.0]);
    write_run("run-mtl", "mtl", vec![46.0, 47.0, 49.0, 48.0, 50.0]);
    let out = veritask_bin(dir.path(), &["report", "run-single", "run-mtl"]);
    assert_ok(&out);
    let grid = stdout(&out);
    assert!(
        grid.contains("Paired t-test (mtl vs single over 5 folds)"),
        "grid: {grid}"
    );
    assert!(grid.contains("df = 4"), "grid: {grid}");
    let single_row = grid.lines().find(|l| l.starts_with("| single |")).unwrap();
    let mtl_row = grid.lines().find(|l| l.starts_with("| mtl |")).unwrap();
    assert!(single_row.ends_with("| 100.00 |"), "row: {single_row}");
    assert!(mtl_row.ends_with("| 100.00 |"), "row: {mtl_row}");
}
