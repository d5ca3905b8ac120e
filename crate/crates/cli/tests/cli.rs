use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn ocae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ocae"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run ocae")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(
        o.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status,
        stdout(o),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn generate(dir: &TempDir, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.path().join(name);
    let mut args = vec!["generate", "--out", p(&out)];
    args.extend_from_slice(extra);
    assert_ok(&ocae(&args));
    out
}

#[test]
fn train_writes_three_files() {
    let dir = TempDir::new().unwrap();
    let csv = generate(&dir, "train.csv", &["--rows", "2000"]);
    let model = dir.path().join("model");
    let report = dir.path().join("report.json");
    let o = ocae(&["train", "--data", p(&csv), "--model-dir", p(&model), "--report", p(&report)]);
    assert_ok(&o);
    let mut files: Vec<String> = std::fs::read_dir(&model)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(files, ["model.ocae", "scaler.json", "threshold.txt"]);
    assert_eq!(std::fs::metadata(model.join("model.ocae")).unwrap().len(), 23_599);
    let text = stdout(&o);
    assert!(text.contains("threshold "), "{text}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(report["rows"], 2000);
    assert_eq!(report["param_count"], 5896);
}

#[test]
fn missing_input_exits_1() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("model");
    let o = ocae(&["train", "--data", "/nonexistent/train.csv", "--model-dir", p(&model)]);
    assert_eq!(o.status.code(), Some(1));
    let o = ocae(&["export", "--model-dir", p(&model)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn too_few_rows_exits_2() {
    let dir = TempDir::new().unwrap();
    let csv = generate(&dir, "tiny.csv", &["--rows", "5"]);
    let o = ocae(&["train", "--data", p(&csv), "--model-dir", p(&dir.path().join("m"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("insufficient data"));
}

#[test]
fn divergence_exits_3() {
    let dir = TempDir::new().unwrap();
    let csv = generate(&dir, "train.csv", &["--rows", "200"]);
    let o = ocae(&[
        "train",
        "--data",
        p(&csv),
        "--model-dir",
        p(&dir.path().join("m")),
        "--hidden-dim",
        "8",
        "--lr",
        "1e300",
        "--epochs",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn zero_rows_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let o = ocae(&["generate", "--out", p(&dir.path().join("x.csv")), "--rows", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--rows"));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn tuned_training_is_byte_reproducible() {
    let dir = TempDir::new().unwrap();
    let csv = generate(&dir, "train.csv", &["--rows", "2000"]);
    let mut bundles = Vec::new();
    for run in ["a", "b"] {
        let model = dir.path().join(run);
        assert_ok(&ocae(&[
            "train",
            "--data",
            p(&csv),
            "--model-dir",
            p(&model),
            "--tune",
            "--trials",
            "10",
            "--seed",
            "7",
        ]));
        let export = dir.path().join(format!("{run}-export"));
        assert_ok(&ocae(&["export", "--model-dir", p(&model), "--out", p(&export)]));
        let files: Vec<Vec<u8>> = ["model.ocae", "scaler.json", "threshold.txt"]
            .iter()
            .map(|f| std::fs::read(export.join(f)).unwrap())
            .collect();
        assert_eq!(files[0], std::fs::read(model.join("model.ocae")).unwrap());
        bundles.push(files);
    }
    assert_eq!(bundles[0], bundles[1]);
}

#[test]
fn export_reports_exact_size() {
    let dir = TempDir::new().unwrap();
    let csv = generate(&dir, "train.csv", &["--rows", "300"]);
    let model = dir.path().join("m");
    assert_ok(&ocae(&["train", "--data", p(&csv), "--model-dir", p(&model), "--epochs", "1"]));
    let before = std::fs::read(model.join("model.ocae")).unwrap();
    let o = ocae(&["export", "--model-dir", p(&model)]);
    assert_ok(&o);
    assert!(stdout(&o).contains("model.ocae: 23599 bytes"), "{}", stdout(&o));
    assert_eq!(std::fs::read(model.join("model.ocae")).unwrap(), before);
}

#[test]
fn tune_prints_trial_report() {
    let dir = TempDir::new().unwrap();
    let csv = generate(&dir, "train.csv", &["--rows", "300"]);
    let o = ocae(&["tune", "--data", p(&csv), "--trials", "3", "--seed", "1"]);
    assert_ok(&o);
    let trials: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let trials = trials.as_array().unwrap();
    assert_eq!(trials.len(), 3);
    assert!(trials.iter().all(|t| t["params"]["hidden_dim"].is_u64()));
}

/// Labels copied from the detector's own verdicts.
#[test]
fn eval_of_a_perfect_labelling_scores_f1_one() {
    let dir = TempDir::new().unwrap();
    let csv = generate(&dir, "train.csv", &["--rows", "300"]);
    let model = dir.path().join("m");
    assert_ok(&ocae(&["train", "--data", p(&csv), "--model-dir", p(&model), "--epochs", "2"]));
    let test = generate(&dir, "test.csv", &["--rows", "400", "--seed", "5", "--anomaly-rate", "0.1"]);

    let bundle = ocae_core::load_bundle(&model).unwrap();
    let (frames, _) = ocae_core::preprocess::load_frames(&test).unwrap();
    let seqs: Vec<u64> = frames.iter().map(|f| f.seq).collect();
    let verdicts: Vec<bool> = frames.iter().map(|f| bundle.verdict(f).unwrap().is_anomaly).collect();
    assert!(verdicts.iter().any(|v| *v));
    let labels = dir.path().join("labels.csv");
    ocae_core::simgen::write_labels(&labels, &seqs, &verdicts).unwrap();

    let json_out = dir.path().join("metrics.json");
    let o = ocae(&[
        "eval",
        "--model-dir",
        p(&model),
        "--data",
        p(&test),
        "--labels",
        p(&labels),
        "--json-out",
        p(&json_out),
    ]);
    assert_ok(&o);
    let text = stdout(&o);
    let last: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(last["f1"], 1.0);
    assert_eq!(last["fp"], 0);
    assert_eq!(last["fn"], 0);
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json_out).unwrap()).unwrap();
    assert_eq!(saved, last);
}

#[test]
fn eval_rejects_empty_or_mismatched_labels() {
    let dir = TempDir::new().unwrap();
    let csv = generate(&dir, "train.csv", &["--rows", "300"]);
    let model = dir.path().join("m");
    assert_ok(&ocae(&["train", "--data", p(&csv), "--model-dir", p(&model), "--epochs", "1"]));

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "seq,label\n").unwrap();
    let o = ocae(&["eval", "--model-dir", p(&model), "--data", p(&csv), "--labels", p(&empty)]);
    assert_eq!(o.status.code(), Some(2));

    let short = dir.path().join("short.csv");
    ocae_core::simgen::write_labels(&short, &[0, 1, 2], &[false, false, true]).unwrap();
    let o = ocae(&["eval", "--model-dir", p(&model), "--data", p(&csv), "--labels", p(&short)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no label for seq 3"));
}

#[test]
fn generate_writes_labels_and_corruption() {
    let dir = TempDir::new().unwrap();
    let labels = dir.path().join("labels.csv");
    let csv = generate(
        &dir,
        "data.csv",
        &[
            "--rows",
            "1000",
            "--anomaly-rate",
            "0.05",
            "--magnitude",
            "0.025",
            "--corruption-rate",
            "0.02",
            "--protect-labels",
            "--labels-out",
            p(&labels),
        ],
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1001);
    assert!(text.starts_with("timestamp,seq,"));
    let labels = ocae_core::simgen::read_labels(&labels).unwrap();
    assert_eq!(labels.len(), 1000);
    assert!(labels.iter().any(|(_, l)| *l));
    let (frames, report) = ocae_core::preprocess::load_frames(&csv).unwrap();
    assert!(report.rows_out < 1000 && frames.len() == report.rows_out);
}

#[test]
fn monitor_without_bundle_exits_1() {
    let dir = TempDir::new().unwrap();
    let o = ocae(&[
        "monitor",
        "--model-dir",
        p(&dir.path().join("missing")),
        "--csv",
        p(&dir.path().join("live.csv")),
        "--bind",
        "127.0.0.1:0",
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn monitor_replays_a_file_and_writes_snapshot() {
    let dir = TempDir::new().unwrap();
    let csv = generate(&dir, "train.csv", &["--rows", "300"]);
    let model = dir.path().join("m");
    assert_ok(&ocae(&["train", "--data", p(&csv), "--model-dir", p(&model), "--epochs", "1"]));
    let snap = dir.path().join("snap.json");
    let o = ocae(&[
        "monitor",
        "--model-dir",
        p(&model),
        "--csv",
        p(&csv),
        "--bind",
        "127.0.0.1:0",
        "--interval",
        "0.05",
        "--max-cycles",
        "2",
        "--snapshot",
        p(&snap),
    ]);
    assert_ok(&o);
    let snap: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(snap).unwrap()).unwrap();
    assert_eq!(snap["last_row"], 300);
    assert_eq!(snap["rows_scored"], 300);
    assert_eq!(snap["alarm_n"], 2);
}

#[test]
fn config_file_supplies_flags_and_cli_wins() {
    let dir = TempDir::new().unwrap();
    let csv = generate(&dir, "train.csv", &["--rows", "300"]);
    let model = dir.path().join("m");
    let config = dir.path().join("ocae.json");
    let json = serde_json::json!({
        "seed": 3,
        "train": { "data": p(&csv), "model_dir": p(&model), "hidden_dim": 8, "epochs": 1 },
        "generate": { "rows": 10 }
    });
    std::fs::write(&config, json.to_string()).unwrap();
    let report = dir.path().join("r.json");
    let o = ocae(&["--config", p(&config), "train", "--hidden-dim", "16", "--report", p(&report)]);
    assert_ok(&o);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(report["params"]["hidden_dim"], 16);
    assert_eq!(report["params"]["epochs"], 1);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"train": {"nope": 1}}"#).unwrap();
    let o = ocae(&["--config", p(&bad), "train"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pipeline_runs_end_to_end() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let o = ocae(&[
        "pipeline",
        "--out-dir",
        p(&out),
        "--rows",
        "500",
        "--test-rows",
        "500",
        "--hidden-dim",
        "16",
        "--epochs",
        "2",
    ]);
    assert_ok(&o);
    for f in ["train.csv", "test.csv", "test_labels.csv", "train_report.json", "metrics.json", "model/model.ocae"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["rows_scored"], 500);
}
