//! End-to-end tests of the `synthteacher` binary: subcommands, exit codes,
//! and run-directory artifacts.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_synthteacher"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.json");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn full_pipeline_compose_train_eval_group_stats() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{
            "seed": 21,
            "total_steps": 150,
            "compose": {"num_backgrounds": 4, "renders_per_background": 2},
            "eval": {"eval_scenes": 4}
        }"#,
    );

    let compose_out = dir.path().join("composed");
    let status = bin()
        .args(["compose", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&compose_out)
        .status()
        .unwrap();
    assert!(status.success());
    let dataset = compose_out.join("dataset.jsonl");
    assert!(dataset.exists());
    assert!(compose_out.join("compose_stats.json").exists());

    let train_out = dir.path().join("trained");
    let status = bin()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&train_out)
        .status()
        .unwrap();
    assert!(status.success());
    for file in ["train_log.jsonl", "summary.json", "teacher.ckpt", "eval_report.json"] {
        assert!(train_out.join(file).exists(), "{file} missing");
    }

    let stats_out = dir.path().join("stats");
    let status = bin()
        .args(["group-stats", "--config"])
        .arg(&config)
        .arg("--dataset")
        .arg(&dataset)
        .arg("--out")
        .arg(&stats_out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(stats_out.join("group_stats.json").exists());

    // Evaluate ground truth against itself.
    let records = synthteacher::annotations::read_dataset(&dataset).unwrap();
    let preds = synthteacher::metrics::predictions_from_ground_truth(&records);
    let preds_path = dir.path().join("preds.jsonl");
    synthteacher::metrics::write_predictions(&preds, &preds_path).unwrap();
    let eval_out = dir.path().join("eval");
    let output = bin()
        .args(["eval", "--config"])
        .arg(&config)
        .arg("--predictions")
        .arg(&preds_path)
        .arg("--dataset")
        .arg(&dataset)
        .arg("--out")
        .arg(&eval_out)
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("overall mean score 1.0000"), "{stdout}");
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"teacher": {"alpha": 5.0}}"#);
    let output = bin()
        .args(["train", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("teacher.alpha"));
}

#[test]
fn missing_files_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let output = bin()
        .args(["group-stats", "--dataset"])
        .arg(dir.path().join("does_not_exist.jsonl"))
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn malformed_dataset_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("bad.jsonl");
    std::fs::write(&dataset, "{this is not json}\n").unwrap();
    let output = bin()
        .args(["group-stats", "--dataset"])
        .arg(&dataset)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn train_runs_are_reproducible_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"seed": 33, "total_steps": 120, "eval": {"eval_scenes": 3}}"#,
    );
    for out in ["a", "b"] {
        let status = bin()
            .args(["train", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(status.success());
    }
    for file in ["train_log.jsonl", "summary.json", "teacher.ckpt", "eval_report.json"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }
}

#[test]
fn seed_override_changes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"seed": 1, "total_steps": 120, "eval": {"eval_scenes": 3}}"#,
    );
    for (out, seed) in [("s1", "1"), ("s2", "2")] {
        let status = bin()
            .args(["train", "--config"])
            .arg(&config)
            .args(["--seed", seed])
            .arg("--out")
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(dir.path().join("s1/train_log.jsonl")).unwrap();
    let b = std::fs::read(dir.path().join("s2/train_log.jsonl")).unwrap();
    assert_ne!(a, b);
}
