//! End-to-end tests of the `cotrain` binary: exit codes, file outputs,
//! determinism across invocations.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cotrain"));
    cmd.env("COTRAIN_LOG", "info");
    cmd
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn write_config(path: &Path, out_dir: &Path, test_csv: &Path, extra_hyper: &str) {
    let text = format!(
        r#"{{
  "dataset": {{
    "source": {{"generator": "two-moons", "n": 300, "noise": 0.1, "seed": 3}},
    "test": {{"csv": {test:?}}},
    "n_labeled": 20,
    "split_seed": 7
  }},
  "model": {{"layer_dims": [2, 8, 2], "seeds": [1, 2]}},
  "hyperparams": {{"total_epochs": 3, "warmup_epochs": 1, "batch_size": 50, "lr0": 0.01{extra_hyper}}},
  "run": {{"out_dir": {out:?}, "seed": 5}}
}}"#,
        test = test_csv.to_str().unwrap(),
        out = out_dir.to_str().unwrap(),
    );
    std::fs::write(path, text).unwrap();
}

#[test]
fn gen_data_is_deterministic_and_reports_a_histogram() {
    let dir = tempdir().unwrap();
    let csv_a = dir.path().join("a.csv");
    let csv_b = dir.path().join("b.csv");
    for csv in [&csv_a, &csv_b] {
        let out = bin()
            .args([
                "gen-data",
                "two-moons",
                "--n",
                "200",
                "--noise",
                "0.1",
                "--seed",
                "3",
                "--out",
            ])
            .arg(csv)
            .output()
            .unwrap();
        assert_exit(&out, 0);
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(stdout.contains("200 rows"), "{stdout}");
        assert!(stdout.contains("class 0: 100"), "{stdout}");
        assert!(stdout.contains("class 1: 100"), "{stdout}");
    }
    assert_eq!(
        std::fs::read(&csv_a).unwrap(),
        std::fs::read(&csv_b).unwrap()
    );
}

#[test]
fn unknown_generator_exits_2_with_the_candidate_list() {
    let out = bin()
        .args(["gen-data", "nosuch", "--out", "/tmp/x.csv"])
        .output()
        .unwrap();
    assert_exit(&out, 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("two-moons"), "{stderr}");
    assert!(stderr.contains("gaussian-blobs"), "{stderr}");
}

#[test]
fn train_eval_round_trip_matches_the_final_metrics_row() {
    let dir = tempdir().unwrap();
    let test_csv = dir.path().join("test.csv");
    let out = bin()
        .args([
            "gen-data",
            "two-moons",
            "--n",
            "150",
            "--noise",
            "0.1",
            "--seed",
            "9",
            "--out",
        ])
        .arg(&test_csv)
        .output()
        .unwrap();
    assert_exit(&out, 0);

    let run_dir = dir.path().join("run");
    let cfg = dir.path().join("config.json");
    write_config(&cfg, &run_dir, &test_csv, "");
    let out = bin().arg("train").arg(&cfg).output().unwrap();
    assert_exit(&out, 0);
    let metrics = run_dir.join("metrics.csv");
    assert!(metrics.exists());
    assert!(run_dir.join("config.json").exists());

    // Determinism across separate processes.
    let first = std::fs::read(&metrics).unwrap();
    let out = bin().arg("train").arg(&cfg).output().unwrap();
    assert_exit(&out, 0);
    assert_eq!(first, std::fs::read(&metrics).unwrap());

    // Eval on the final checkpoints must reproduce the final metrics row.
    let rows = cotrain::metrics::read_metrics(&metrics).unwrap();
    let final_row = rows.last().unwrap();
    let out = bin()
        .arg("eval")
        .arg(run_dir.join("checkpoints/final"))
        .arg(&test_csv)
        .arg("--json")
        .output()
        .unwrap();
    assert_exit(&out, 0);
    let parsed: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("eval --json prints one JSON object");
    let mean = parsed["mean"].as_f64().unwrap();
    assert!(
        (mean - final_row.mean_err).abs() < 1e-12,
        "eval mean {mean} vs final row {}",
        final_row.mean_err
    );
    assert_eq!(parsed["per_view"].as_array().unwrap().len(), 2);
}

#[test]
fn invalid_config_exits_2_naming_the_field() {
    let dir = tempdir().unwrap();
    let test_csv = dir.path().join("test.csv");
    bin()
        .args([
            "gen-data",
            "two-moons",
            "--n",
            "60",
            "--noise",
            "0.1",
            "--seed",
            "9",
            "--out",
        ])
        .arg(&test_csv)
        .output()
        .unwrap();
    let cfg = dir.path().join("bad.json");
    write_config(
        &cfg,
        &dir.path().join("run"),
        &test_csv,
        r#", "n_views": 3"#,
    );
    let out = bin().arg("train").arg(&cfg).output().unwrap();
    assert_exit(&out, 2);
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("hyperparams.n_views"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn missing_checkpoints_exit_1() {
    let dir = tempdir().unwrap();
    let test_csv = dir.path().join("test.csv");
    bin()
        .args([
            "gen-data",
            "two-moons",
            "--n",
            "60",
            "--noise",
            "0.1",
            "--seed",
            "9",
            "--out",
        ])
        .arg(&test_csv)
        .output()
        .unwrap();
    let out = bin()
        .arg("eval")
        .arg(dir.path().join("nowhere"))
        .arg(&test_csv)
        .output()
        .unwrap();
    assert_exit(&out, 1);
}

#[test]
fn corrupt_checkpoint_exits_1_with_the_file_name() {
    let dir = tempdir().unwrap();
    let ckpt = dir.path().join("ckpts");
    std::fs::create_dir_all(&ckpt).unwrap();
    std::fs::write(
        ckpt.join("view_00.bin"),
        b"{\"layer_dims\":[2,2],\"seed\":1}\nxx",
    )
    .unwrap();
    let test_csv = dir.path().join("test.csv");
    bin()
        .args([
            "gen-data",
            "two-moons",
            "--n",
            "60",
            "--noise",
            "0.1",
            "--seed",
            "9",
            "--out",
        ])
        .arg(&test_csv)
        .output()
        .unwrap();
    let out = bin()
        .arg("eval")
        .arg(&ckpt)
        .arg(&test_csv)
        .output()
        .unwrap();
    assert_exit(&out, 1);
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("view_00.bin"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn divergent_training_exits_3() {
    let dir = tempdir().unwrap();
    let test_csv = dir.path().join("test.csv");
    bin()
        .args([
            "gen-data",
            "two-moons",
            "--n",
            "60",
            "--noise",
            "0.1",
            "--seed",
            "9",
            "--out",
        ])
        .arg(&test_csv)
        .output()
        .unwrap();
    let cfg = dir.path().join("hot.json");
    write_config(
        &cfg,
        &dir.path().join("run"),
        &test_csv,
        r#", "weight_decay": 1e200"#,
    );
    let out = bin().arg("train").arg(&cfg).output().unwrap();
    assert_exit(&out, 3);
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("epoch"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn quiet_mode_silences_train_stdout() {
    let dir = tempdir().unwrap();
    let test_csv = dir.path().join("test.csv");
    bin()
        .args([
            "gen-data",
            "two-moons",
            "--n",
            "60",
            "--noise",
            "0.1",
            "--seed",
            "9",
            "--out",
        ])
        .arg(&test_csv)
        .output()
        .unwrap();
    let cfg = dir.path().join("config.json");
    write_config(&cfg, &dir.path().join("run"), &test_csv, "");
    let out = bin()
        .env("COTRAIN_LOG", "quiet")
        .arg("train")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_exit(&out, 0);
    assert!(out.stdout.is_empty());
}

#[test]
fn diagnose_prints_both_final_collapse_scores() {
    let dir = tempdir().unwrap();
    let test_csv = dir.path().join("test.csv");
    bin()
        .args([
            "gen-data",
            "two-moons",
            "--n",
            "80",
            "--noise",
            "0.1",
            "--seed",
            "9",
            "--out",
        ])
        .arg(&test_csv)
        .output()
        .unwrap();
    let cfg = dir.path().join("config.json");
    write_config(&cfg, &dir.path().join("diag"), &test_csv, "");
    let out = bin().arg("diagnose").arg(&cfg).output().unwrap();
    assert_exit(&out, 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("cot_only:"), "{stdout}");
    assert!(stdout.contains("dct:"), "{stdout}");
    assert!(stdout.contains("collapse"), "{stdout}");
    assert!(dir.path().join("diag/summary.json").exists());
    assert!(dir.path().join("diag/cot_only/metrics.csv").exists());
    assert!(dir.path().join("diag/dct/metrics.csv").exists());
}
