use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn stfgnn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stfgnn"))
        .args(args)
        .current_dir(cwd)
        .env("STFGNN_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn summary(out: &Output) -> Value {
    let stdout = String::from_utf8_lossy(&out.stdout);
    let last = stdout.lines().last().expect("summary line");
    serde_json::from_str(last).expect("summary is JSON")
}

fn synth(dir: &Path, nodes: usize, clusters: usize, steps: usize, sigma: f64) {
    let out = stfgnn(
        &[
            "synth",
            "--nodes",
            &nodes.to_string(),
            "--clusters",
            &clusters.to_string(),
            "--steps",
            &steps.to_string(),
            "--sigma",
            &sigma.to_string(),
            "--seed",
            "5",
            "--out",
            "data",
        ],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

const SMALL_RUN: &str = r#"{
  "data": {"signal": "data/signal.stfd"},
  "graph": {"spatial": "data/spatial.csv", "alpha": 0.25},
  "model": {"channels": 4, "out_hidden": 8, "layers": 1, "blocks": 2, "horizon": 3},
  "train": {"epochs": 2, "batch_size": 16, "seed": 3},
  "output": {"directory": "run"}
}"#;

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 6, 2, 300, 2.0);
    let first = fs::read(dir.path().join("data/signal.stfd")).unwrap();
    let labels = fs::read(dir.path().join("data/labels.csv")).unwrap();
    synth(dir.path(), 6, 2, 300, 2.0);
    assert_eq!(fs::read(dir.path().join("data/signal.stfd")).unwrap(), first);
    assert_eq!(fs::read(dir.path().join("data/labels.csv")).unwrap(), labels);
}

#[test]
fn temporal_graph_is_reproducible_and_follows_alpha() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 8, 2, 400, 5.0);
    let run = |out: &str| {
        let o = stfgnn(
            &[
                "build-temporal-graph",
                "--data",
                "data/signal.stfd",
                "--alpha",
                "0.125",
                "--out",
                out,
            ],
            dir.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        summary(&o)
    };
    let s = run("a.csv");
    run("b.csv");
    assert_eq!(s["command"], "build-temporal-graph");
    assert_eq!(s["k_per_node"], 1);
    assert_eq!(
        fs::read(dir.path().join("a.csv")).unwrap(),
        fs::read(dir.path().join("b.csv")).unwrap()
    );
    let labels: Vec<usize> = fs::read_to_string(dir.path().join("data/labels.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    let edges = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    for line in edges.lines().skip(1) {
        let f: Vec<usize> = line.split(',').take(2).map(|v| v.parse().unwrap()).collect();
        assert_eq!(labels[f[0]], labels[f[1]], "cross-cluster edge {line}");
    }
}

#[test]
fn fusion_graph_command() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.csv"), "from,to\n0,1\n1,2\n").unwrap();
    fs::write(dir.path().join("t.csv"), "0,2\n").unwrap();
    let o = stfgnn(
        &[
            "build-fusion-graph",
            "--spatial",
            "s.csv",
            "--temporal",
            "t.csv",
            "--nodes",
            "3",
            "--out",
            "f.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&o);
    assert_eq!(s["size"], 12);
    assert_eq!(s["symmetric"], true);
    // 2 Es + 4 Et + 2 (K - 1) N + K N with Es = 4 and Et = 2 ones, N = 3, K = 4.
    assert_eq!(s["nonzeros"], 8 + 8 + 18 + 12);
}

#[test]
fn gradcheck_passes_on_tiny_model() {
    let dir = tempfile::tempdir().unwrap();
    let o = stfgnn(&["gradcheck"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&o);
    assert!(s["max_rel_error"].as_f64().unwrap() <= 1e-4);
    assert_eq!(s["passed"], true);
}

#[test]
fn stacking_bound_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"model": {"layers": 4}}"#).unwrap();
    let o = stfgnn(&["train", "--config", "c.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("stacking bound"), "{err}");
}

#[test]
fn exit_codes_by_error_class() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("unknown.json"), r#"{"modle": {}}"#).unwrap();
    assert_eq!(
        stfgnn(&["train", "--config", "unknown.json"], dir.path())
            .status
            .code(),
        Some(2)
    );
    fs::write(
        dir.path().join("missing.json"),
        r#"{"data": {"signal": "nope.stfd"}}"#,
    )
    .unwrap();
    assert_eq!(
        stfgnn(&["train", "--config", "missing.json"], dir.path())
            .status
            .code(),
        Some(3)
    );
    fs::write(dir.path().join("bad.csv"), "t,n0\n0,1\n1,x\n").unwrap();
    let o = stfgnn(
        &["build-temporal-graph", "--data", "bad.csv", "--out", "g.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn train_writes_artifacts_and_effective_config_is_a_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 6, 2, 400, 2.0);
    fs::write(dir.path().join("c.json"), SMALL_RUN).unwrap();
    let o = stfgnn(&["train", "--config", "c.json"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&o);
    assert_eq!(s["command"], "train");
    assert_eq!(s["epochs"], 2);
    let run = dir.path().join("run");
    for f in [
        "best.stfc",
        "last.stfc",
        "history.csv",
        "report.csv",
        "report.txt",
        "effective_config.json",
    ] {
        assert!(run.join(f).exists(), "{f}");
    }
    let report = fs::read_to_string(run.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 3 + 1);

    let effective = fs::read_to_string(run.join("effective_config.json")).unwrap();
    fs::write(dir.path().join("again.json"), &effective).unwrap();
    let o = stfgnn(&["train", "--config", "again.json"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read_to_string(run.join("effective_config.json")).unwrap(),
        effective
    );

    let o = stfgnn(
        &["evaluate", "--config", "c.json", "--checkpoint", "run/best.stfc"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(summary(&o)["test"], s["test"]);
}

#[test]
fn evaluate_rejects_a_mismatched_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 6, 2, 400, 2.0);
    fs::write(dir.path().join("c.json"), SMALL_RUN).unwrap();
    assert!(stfgnn(&["train", "--config", "c.json"], dir.path())
        .status
        .success());
    let other = SMALL_RUN.replace("\"channels\": 4", "\"channels\": 5");
    fs::write(dir.path().join("d.json"), other).unwrap();
    let o = stfgnn(
        &["evaluate", "--config", "d.json", "--checkpoint", "run/best.stfc"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ablation_table_has_one_row_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 6, 2, 400, 2.0);
    fs::write(dir.path().join("c.json"), SMALL_RUN).unwrap();
    let o = stfgnn(
        &[
            "ablate",
            "--config",
            "c.json",
            "--variants",
            "ST4_sp1_conv,ST4_sp1_noconv,T4_sp5_conv,Q_bad",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(summary(&o)["failures"], 1);
    let csv = fs::read_to_string(dir.path().join("run/ablation.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "variant,mae,mape,rmse,status");
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("ST4_sp1_conv,") && rows[1].ends_with(",ok"));
    assert!(rows[2].starts_with("ST4_sp1_noconv,") && rows[2].ends_with(",ok"));
    assert!(rows[3].ends_with(",ok"));
    assert!(rows[4].starts_with("Q_bad,,,,failed"));
}

#[test]
fn invalid_worker_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_stfgnn"))
        .args(["gradcheck"])
        .current_dir(dir.path())
        .env("STFGNN_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
