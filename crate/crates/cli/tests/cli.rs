use std::path::Path;
use std::process::{Command, Output};

fn speedlens(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_speedlens"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

const CONFIG: &str = r#"
output_dir = "out"
workers = 1

[input]
points = "bundle/points.csv"
network = "bundle/network.geojson"

[learn.rf]
n_trees = 10
[learn.gbm]
n_trees = 10
[learn.xgb]
n_trees = 10
[learn.svm]
epochs = 3

[explain]
shap_rows = 40
dependence_features = 1

[explain.tsne]
perplexity = 8.0
iters = 200
exaggeration_iters = 50

[hotspot]
min_points = 20
"#;

fn setup() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let out = speedlens(
        &["generate", "--out", "bundle", "--n-journeys", "90", "--grid-size", "6", "--seed", "5", "--mix", "1,1,1,1,1,1"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["journeys"], 90);
    std::fs::write(tmp.path().join("speedlens.toml"), CONFIG).unwrap();
    tmp
}

#[test]
fn run_succeeds_and_writes_manifest() {
    let tmp = setup();
    let out = speedlens(&["run", "-c", "speedlens.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["stages"].as_array().unwrap().len(), 10);
    assert_eq!(manifest["stages"][1]["input"], 90);
}

#[test]
fn validation_errors_exit_one_and_write_nothing() {
    let tmp = setup();
    let out = speedlens(&["run", "-c", "speedlens.toml", "--set", "models.train=[\"XGB\",\"Prophet\"]"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Prophet"));
    assert!(!tmp.path().join("out").exists());

    assert_eq!(speedlens(&["run", "--no-such-flag"], tmp.path()).status.code(), Some(1));
    assert_eq!(speedlens(&["run", "-c", "speedlens.toml", "--set", "split.test_ratio=1.5"], tmp.path()).status.code(), Some(1));
}

#[test]
fn stage_failures_exit_two() {
    let tmp = setup();
    let out = speedlens(&["run", "-c", "speedlens.toml", "--set", "input.network=\"missing.geojson\""], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("load_network"));
    assert!(!tmp.path().join("out").exists());
    assert!(!tmp.path().join("out.partial").exists());
}

#[test]
fn stages_chain_through_files() {
    let tmp = setup();
    for cmd in ["ingest", "enrich", "features", "train", "evaluate", "explain", "hotspots"] {
        let out = speedlens(&[cmd, "-c", "speedlens.toml", "-o", "staged"], tmp.path());
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["journeys.ndjson", "matched.ndjson", "features.csv", "split.json", "models/XGB.json", "evaluation.csv", "explain/embedding.csv", "hotspots.geojson"] {
        assert!(tmp.path().join("staged").join(f).is_file(), "{f}");
    }
    // explain before train has nothing to read
    let out = speedlens(&["explain", "-c", "speedlens.toml", "-o", "empty"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dump_config_reflects_overrides() {
    let tmp = setup();
    let out = speedlens(&["run", "-c", "speedlens.toml", "-w", "3", "--set", "split.seed=99", "--dump-config"], tmp.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("workers = 3"));
    assert!(text.contains("seed = 99"));
}
