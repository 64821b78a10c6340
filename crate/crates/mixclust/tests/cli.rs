//! End-to-end checks of the command-line interface: artifact layout, exit
//! codes and numerical sanity of the outputs.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mixclust"))
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

const CONT_SCHEMA: &str = r#"{"columns": [
    {"name": "x1", "kind": "continuous"},
    {"name": "x2", "kind": "continuous"}
]}"#;

const CONT_DATA: &str = "x1,x2\n1.0,4.0\n2.0,3.5\n3.0,5.0\n1.5,4.5\n2.5,3.0\n\
                         0.5,4.2\n2.2,3.8\n1.8,4.8\n2.8,3.2\n1.2,4.0\n";

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("failed to spawn the CLI binary")
}

#[test]
fn fit_single_cluster_recovers_column_means() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let schema = dir.path().join("schema.json");
    write(&data, CONT_DATA);
    write(&schema, CONT_SCHEMA);
    let out = dir.path().join("fit");

    let result = run(bin()
        .args(["fit", "--model", "EII", "--G", "1", "--iters", "20"])
        .arg("--data")
        .arg(&data)
        .arg("--schema")
        .arg(&schema)
        .arg("--out")
        .arg(&out));
    assert!(
        result.status.success(),
        "fit failed: {}",
        String::from_utf8_lossy(&result.stderr)
    );

    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fit.json")).unwrap()).unwrap();
    let mu = json["params"]["mu"][0].as_array().unwrap();
    // with one cluster the latent means are the sample means
    assert!((mu[0].as_f64().unwrap() - 1.85).abs() < 1e-9);
    assert!((mu[1].as_f64().unwrap() - 4.0).abs() < 1e-9);
    assert!(dir.path().join("fit_trace.csv").exists());
    assert!(dir.path().join("fit_manifest.json").exists());

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fit_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "fit");
    assert!(manifest["input_sha256"].is_object());
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn fit_without_schema_is_a_usage_error() {
    let result = run(bin().args(["fit", "--model", "EII", "--G", "1", "--data", "x.csv"]));
    assert!(!result.status.success());
    // clap usage errors exit with 2
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn fit_with_malformed_cell_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let schema = dir.path().join("schema.json");
    write(&data, "x1,x2\n1.0,oops\n2.0,3.0\n");
    write(&schema, CONT_SCHEMA);
    let result = run(bin()
        .args(["fit", "--model", "EII", "--G", "1"])
        .arg("--data")
        .arg(&data)
        .arg("--schema")
        .arg(&schema)
        .arg("--out")
        .arg(dir.path().join("fit")));
    assert_eq!(result.status.code(), Some(2), "input errors must exit 2");
}

#[test]
fn simulate_writes_replicates_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.json");
    let spec = fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/sim_study_spec.json"),
    )
    .unwrap();
    // shrink the shipped spec for speed
    let mut v: serde_json::Value = serde_json::from_str(&spec).unwrap();
    v["n"] = serde_json::json!(40);
    write(&spec_path, &v.to_string());

    for out in ["a", "b"] {
        let result = run(bin()
            .args(["simulate", "--n-replicates", "2"])
            .arg("--spec")
            .arg(&spec_path)
            .arg("--out-dir")
            .arg(dir.path().join(out)));
        assert!(
            result.status.success(),
            "simulate failed: {}",
            String::from_utf8_lossy(&result.stderr)
        );
    }
    for rep in ["rep_000.csv", "rep_001.csv", "rep_000_labels.csv"] {
        let a = fs::read_to_string(dir.path().join("a").join(rep)).unwrap();
        let b = fs::read_to_string(dir.path().join("b").join(rep)).unwrap();
        assert_eq!(a, b, "{rep} differs between identical runs");
    }
    assert!(dir.path().join("a/schema.json").exists());
    assert!(dir.path().join("a/manifest.json").exists());
    let rows = fs::read_to_string(dir.path().join("a/rep_000.csv")).unwrap();
    assert_eq!(rows.lines().count(), 41); // header + 40 rows
}

#[test]
fn score_identical_partitions_gives_ari_one() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    write(&a, "label\n0\n0\n1\n1\n2\n2\n");
    // same partition under a different labelling
    write(&b, "label\n5\n5\n3\n3\n9\n9\n");
    let result = run(bin()
        .arg("score")
        .arg("--labels-a")
        .arg(&a)
        .arg("--labels-b")
        .arg(&b));
    assert!(result.status.success());
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(
        stdout.contains("ARI: 1.0000"),
        "unexpected score output: {stdout}"
    );
}

#[test]
fn score_with_mismatched_lengths_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    write(&a, "0\n1\n0\n");
    write(&b, "0\n1\n");
    let result = run(bin()
        .arg("score")
        .arg("--labels-a")
        .arg(&a)
        .arg("--labels-b")
        .arg(&b));
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn select_on_small_grid_reports_a_winner() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let schema = dir.path().join("schema.json");
    // two well-separated blobs
    let mut rows = String::from("x1,x2\n");
    for i in 0..15 {
        rows.push_str(&format!("{:.3},{:.3}\n", -4.0 + 0.1 * i as f64, -4.0));
        rows.push_str(&format!("{:.3},{:.3}\n", 4.0 - 0.1 * i as f64, 4.0));
    }
    write(&data, &rows);
    write(&schema, CONT_SCHEMA);

    let result = run(bin()
        .args([
            "select", "--models", "EII,VII", "--gmin", "1", "--gmax", "2", "--iters", "200",
        ])
        .arg("--data")
        .arg(&data)
        .arg("--schema")
        .arg(&schema)
        .arg("--out")
        .arg(dir.path().join("select")));
    assert!(
        result.status.success(),
        "select failed: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("selected:"), "no selection line: {stdout}");
    assert!(stdout.contains("G=2"), "two blobs should pick G=2: {stdout}");
    assert!(dir.path().join("select.json").exists());
    assert!(dir.path().join("select_bic.txt").exists());
    assert!(dir.path().join("select_manifest.json").exists());
}
