use super::*;
use crate::synth::{generate_synthetic, BundleFiles, SynthConfig};

fn bundle(dir: &Path, n: usize) -> BundleFiles {
    let cfg = SynthConfig {
        n_journeys: n,
        grid_size: 8,
        seed: 31,
        behavior_mix: [1.0; 6],
        ..SynthConfig::default()
    };
    generate_synthetic(&cfg).unwrap().write(&dir.join("bundle")).unwrap()
}

pub(crate) fn quick_config(files: &BundleFiles, out: &Path) -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.input.points = files.points.clone();
    c.input.network = files.network.clone();
    c.output_dir = out.to_path_buf();
    c.workers = 1;
    c.learn.rf.n_trees = 15;
    c.learn.gbm.n_trees = 15;
    c.learn.xgb.n_trees = 15;
    c.learn.svm.epochs = 5;
    c.explain.shap_rows = 60;
    c.explain.tsne.perplexity = 10.0;
    c.explain.tsne.iters = 300;
    c.explain.tsne.exaggeration_iters = 100;
    c.explain.dependence_features = 2;
    c.hotspot.min_points = 50;
    c
}

#[test]
fn full_run_writes_every_stage_and_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let files = bundle(tmp.path(), 240);
    let out = tmp.path().join("out");
    let cfg = quick_config(&files, &out);
    let m = run_pipeline(&cfg).unwrap();

    let names: Vec<&str> = m.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(names, STAGES);
    for s in &m.stages {
        assert!(s.conserved(), "{s:?}");
        assert!(m.timing.wall_time_s.contains_key(&s.stage));
    }
    // the journey count flows unchanged through stages that reject nothing
    assert_eq!(m.stage("ingest").unwrap().input, 240);
    assert_eq!(m.stage("features").unwrap().output, 240);
    assert_eq!(m.stage("split").unwrap().output, 240);
    assert_eq!(m.stage("split").unwrap().details["test_rows"], 72);

    for f in [
        CONFIG_FILE,
        FEATURES_FILE,
        SPLIT_FILE,
        EVALUATION_JSON,
        EVALUATION_CSV,
        HOTSPOTS_GEOJSON,
        HOTSPOTS_CSV,
        "models/LDA.json",
        "models/LinearSVM.json",
        "models/RF.json",
        "models/GBM.json",
        "models/XGB.json",
        "explain/importance.csv",
        "explain/shap_level_0.csv",
        "explain/shap_level_5.csv",
        "explain/embedding.csv",
        "explain/dependence.csv",
        "explain/dependence.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
        assert_eq!(m.artifacts[f], sha256_file(&out.join(f)).unwrap(), "{f}");
    }
    assert!(!staging_dir(&out).exists());
    assert_eq!(Manifest::read(&out).unwrap(), m);
    assert_eq!(m.inputs["points"], sha256_file(&files.points).unwrap());
}

#[test]
fn bad_config_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let files = BundleFiles {
        network: tmp.path().join("n.geojson"),
        points: tmp.path().join("p.csv"),
        truth: tmp.path().join("t.json"),
    };
    let out = tmp.path().join("out");
    let mut cfg = quick_config(&files, &out);
    cfg.models.train = vec!["XGB".into(), "CatBoost".into()];
    assert!(matches!(run_pipeline(&cfg), Err(Error::Config(_))));
    cfg.models.train = vec!["LDA".into()];
    assert!(matches!(run_pipeline(&cfg), Err(Error::Config(m)) if m.contains("explain")));
    assert!(!out.exists() && !staging_dir(&out).exists());
}

#[test]
fn stage_failure_names_the_stage_and_cleans_up() {
    let tmp = tempfile::tempdir().unwrap();
    let files = bundle(tmp.path(), 30);
    let out = tmp.path().join("out");
    let mut cfg = quick_config(&files, &out);
    std::fs::write(&files.network, "{\"type\": \"FeatureCollection\"}").unwrap();
    match run_pipeline(&cfg) {
        Err(Error::Stage { stage, .. }) => assert_eq!(stage, "load_network"),
        other => panic!("{other:?}"),
    }
    assert!(!out.exists() && !staging_dir(&out).exists());

    // a directory that is not ours is never overwritten
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join("notes.txt"), "keep").unwrap();
    cfg.input.network = files.network.clone();
    assert!(matches!(run_pipeline(&cfg), Err(Error::Config(_))));
    assert_eq!(std::fs::read_to_string(out.join("notes.txt")).unwrap(), "keep");
}

#[test]
fn single_stages_match_the_fused_run() {
    let tmp = tempfile::tempdir().unwrap();
    let files = bundle(tmp.path(), 120);
    let fused = tmp.path().join("fused");
    let m = run_pipeline(&quick_config(&files, &fused)).unwrap();

    let staged = tmp.path().join("staged");
    let cfg = quick_config(&files, &staged);
    assert_eq!(run_ingest(&cfg).unwrap(), *m.stage("ingest").unwrap());
    assert_eq!(run_enrich(&cfg).unwrap().output, m.stage("enrich").unwrap().output);
    let recs = run_features(&cfg).unwrap();
    assert_eq!(recs[1], *m.stage("features").unwrap());
    let (recs, _) = run_train(&cfg).unwrap();
    assert_eq!(recs[0], *m.stage("split").unwrap());
    run_evaluate(&cfg).unwrap();
    run_explain(&cfg).unwrap();
    assert_eq!(run_hotspots(&cfg).unwrap(), *m.stage("hotspots").unwrap());
    for (name, hash) in &m.artifacts {
        if name == CONFIG_FILE {
            continue;
        }
        assert_eq!(&sha256_file(&staged.join(name)).unwrap(), hash, "{name}");
    }
}
