//! End-to-end orchestration: one config in, one directory of artifacts out.
//!
//! The all-in-one run builds everything in `<output>.partial` and renames it
//! into place only when every stage succeeded. Single-stage entry points read
//! and write the same file names inside the output directory, so stages can
//! also be run one at a time.

mod extract;
mod stages;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::features::{assemble_dataset, read_features_csv, FeatureCsvWriter, FeatureMatrix};
use crate::hotspot::HotspotAggregator;
use crate::ingest::Journey;
use crate::learn::{SplitResult, TrainedModel};
use crate::roadnet::{load_network, MatchedJourney, NetworkIndex};

pub use extract::{extract_features, ExtractReport, Extractor, PassTimes, BATCH_JOURNEYS};
pub use stages::{
    evaluate_stage, explain_stage, hotspot_stage, model_path, split_stage, train_stage, ModelEvaluation, EVALUATION_CSV,
    EVALUATION_JSON, EXPLAIN_DIR, HOTSPOTS_CSV, HOTSPOTS_GEOJSON, MODELS_DIR, SPLIT_FILE,
};

pub const STAGES: [&str; 10] = [
    "load_network",
    "ingest",
    "enrich",
    "kinematics",
    "features",
    "split",
    "train",
    "evaluate",
    "explain",
    "hotspots",
];

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const FEATURES_FILE: &str = "features.csv";
pub const JOURNEYS_FILE: &str = "journeys.ndjson";
pub const MATCHED_FILE: &str = "matched.ndjson";

/// Row counts for one stage. `input == output + Σ rejected`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub input: u64,
    pub output: u64,
    pub rejected: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, Value>,
}

impl StageRecord {
    pub fn new(stage: &str, input: u64, output: u64) -> Self {
        StageRecord {
            stage: stage.into(),
            input,
            output,
            ..StageRecord::default()
        }
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) {
        self.details
            .insert(key.into(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn conserved(&self) -> bool {
        self.input == self.output + self.rejected.values().sum::<u64>()
    }
}

/// Everything that varies between identical runs lives here.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_at: String,
    pub finished_at: String,
    pub wall_time_s: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// Hash of the effective config with output location and worker count
    /// blanked; neither affects any artifact.
    pub config_hash: String,
    /// SHA-256 per input file.
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    /// SHA-256 per artifact, by path relative to the output directory.
    pub artifacts: BTreeMap<String, String>,
    pub warnings: Vec<String>,
    pub timing: Timing,
}

impl Manifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_reader(BufReader::new(f))?)
    }
}

/// Tags an error with the stage it came from, unless it already is tagged.
pub(crate) fn in_stage<T>(stage: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Stage { .. } => e,
        cause => Error::Stage {
            stage: stage.into(),
            cause: Box::new(cause),
        },
    })
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(open(path)?)?)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut h = Sha256::new();
    std::io::copy(&mut open(path)?, &mut h).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(h.finalize()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).unwrap_or(&path).to_path_buf());
        }
    }
    Ok(())
}

/// SHA-256 of every file under `dir` except the manifest.
pub fn hash_artifacts(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    let mut out = BTreeMap::new();
    for rel in files {
        let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        if key != MANIFEST_FILE {
            out.insert(key, sha256_file(&dir.join(&rel))?);
        }
    }
    Ok(out)
}

fn portable(cfg: &PipelineConfig) -> PipelineConfig {
    PipelineConfig {
        output_dir: PathBuf::new(),
        workers: 0,
        ..cfg.clone()
    }
}

/// Full validation, including cross-field checks that need the model list.
pub fn validate_config(cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    if !cfg.models.kinds()?.contains(&cfg.models.explain_kind()?) {
        return Err(Error::Config(format!(
            "`models.explain` = {} is not among the trained models",
            cfg.models.explain
        )));
    }
    if cfg.output_dir.as_os_str().is_empty() {
        return Err(Error::Config("`output_dir` is not set".into()));
    }
    Ok(())
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn now() -> String {
    jiff::Timestamp::now().to_string()
}

pub fn load_index(cfg: &PipelineConfig) -> Result<(NetworkIndex, StageRecord)> {
    in_stage("load_network", (|| {
        let (net, rep) = load_network(open(&cfg.input.network)?, &cfg.input.network_schema)?;
        let mut rec = StageRecord::new(
            "load_network",
            rep.features_read as u64,
            (rep.segments + rep.intersections) as u64,
        );
        rec.rejected.insert("missing_speed_limit".into(), rep.rejected_missing_speed_limit as u64);
        rec.rejected.insert("missing_signalized".into(), rep.rejected_missing_signalized as u64);
        rec.detail("segments", rep.segments);
        rec.detail("intersections", rep.intersections);
        rec.detail("unknown_context_class", rep.unknown_context_class);
        rec.detail("unknown_land_use", rep.unknown_land_use);
        Ok((NetworkIndex::build(net)?, rec))
    })())
}

/// Assembles the model matrix and records the rows dropped for non-finite values.
fn assemble(cfg: &PipelineConfig, rows: Vec<(String, crate::features::JourneyFeatures)>, warnings: &mut Vec<String>) -> Result<(FeatureMatrix, u64, u64)> {
    let (data, rep) = assemble_dataset(rows, &cfg.selection)?;
    if rep.leakage_warning {
        warnings.push("speeding_prop selected as a predictor; the label is a binning of it".into());
    }
    Ok((data, rep.rows_in as u64, rep.dropped_non_finite as u64))
}

fn split_with_assembly(
    cfg: &PipelineConfig,
    data: &FeatureMatrix,
    rows_in: u64,
    dropped: u64,
    dir: &Path,
) -> Result<(SplitResult, StageRecord)> {
    let (split, mut rec) = split_stage(cfg, data, dir)?;
    rec.input = rows_in;
    rec.rejected.insert("non_finite".into(), dropped);
    Ok((split, rec))
}

fn run_into(cfg: &PipelineConfig, dir: &Path) -> Result<Manifest> {
    let started_at = now();
    let mut times: BTreeMap<String, f64> = BTreeMap::new();
    let mut stages = Vec::new();
    let mut warnings = Vec::new();
    let mut inputs = BTreeMap::new();
    inputs.insert("points".to_string(), in_stage("ingest", sha256_file(&cfg.input.points))?);
    inputs.insert("network".to_string(), in_stage("load_network", sha256_file(&cfg.input.network))?);
    let cfg_portable = portable(cfg);
    std::fs::write(dir.join(CONFIG_FILE), cfg_portable.to_toml()?).map_err(|e| Error::io(dir.join(CONFIG_FILE), e))?;

    let t = Instant::now();
    let (index, rec) = load_index(cfg)?;
    stages.push(rec);
    times.insert("load_network".into(), t.elapsed().as_secs_f64());

    let mut rows = Vec::new();
    let mut writer = in_stage("features", FeatureCsvWriter::new(create(&dir.join(FEATURES_FILE))?))?;
    let mut hot = HotspotAggregator::new(cfg.hotspot.statistic);
    let mut hot_time = 0.0;
    let points = in_stage("ingest", open(&cfg.input.points))?;
    let report = extract_features(
        cfg,
        &index,
        points,
        |id, f| {
            writer.write(id, f)?;
            rows.push((id.to_string(), *f));
            Ok(())
        },
        |mj| {
            let t = Instant::now();
            for p in &mj.points {
                in_stage("hotspots", hot.add_point(p))?;
            }
            hot_time += t.elapsed().as_secs_f64();
            Ok(())
        },
    )?;
    in_stage("features", writer.finish())?;
    stages.extend([report.ingest_record(), report.enrich_record(), report.kinematics_record(), report.features_record()]);
    times.insert("ingest".into(), report.times.ingest);
    times.insert("enrich".into(), report.times.enrich);
    times.insert("kinematics".into(), report.times.kinematics);
    times.insert("features".into(), report.times.features);

    let t = Instant::now();
    let (data, rows_in, dropped) = in_stage("split", assemble(cfg, rows, &mut warnings))?;
    let (split, rec) = in_stage("split", split_with_assembly(cfg, &data, rows_in, dropped, dir))?;
    stages.push(rec);
    times.insert("split".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let (models, rec) = in_stage("train", train_stage(cfg, &data, &split, dir))?;
    stages.push(rec);
    times.insert("train".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let (_, rec) = in_stage("evaluate", evaluate_stage(&data, &split, &models, dir))?;
    stages.push(rec);
    times.insert("evaluate".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let kind = cfg.models.explain_kind()?;
    let model = models.iter().find(|m| m.kind() == kind).expect("explain model was validated as trained");
    stages.push(in_stage("explain", explain_stage(cfg, &data, &split, model, dir))?);
    times.insert("explain".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    stages.push(in_stage("hotspots", hotspot_stage(cfg, hot.finish(), index.network(), dir))?);
    times.insert("hotspots".into(), hot_time + t.elapsed().as_secs_f64());

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: cfg_portable.hash()?,
        inputs,
        stages,
        artifacts: hash_artifacts(dir)?,
        warnings,
        timing: Timing {
            started_at,
            finished_at: now(),
            wall_time_s: times,
        },
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn staging_dir(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

fn dir_is_empty(dir: &Path) -> Result<bool> {
    Ok(std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_none())
}

/// Runs every stage. On failure nothing is left behind and a previous output
/// directory is untouched.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Manifest> {
    validate_config(cfg)?;
    let out = &cfg.output_dir;
    if out.exists() && !out.join(MANIFEST_FILE).exists() && !dir_is_empty(out)? {
        return Err(Error::Config(format!(
            "{} is not empty and holds no manifest; refusing to overwrite",
            out.display()
        )));
    }
    let staging = staging_dir(out);
    if staging.exists() {
        std::fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    std::fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    let result = thread_pool(cfg.workers).and_then(|pool| pool.install(|| run_into(cfg, &staging)));
    match result {
        Ok(manifest) => {
            if out.exists() {
                std::fs::remove_dir_all(out).map_err(|e| Error::io(out, e))?;
            }
            std::fs::rename(&staging, out).map_err(|e| Error::io(out, e))?;
            Ok(manifest)
        }
        Err(e) => {
            let _ = std::fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

// Single-stage entry points. Each reads what the previous stage left in the
// output directory.

fn out_dir(cfg: &PipelineConfig) -> Result<&Path> {
    let out = cfg.output_dir.as_path();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    Ok(out)
}

fn write_ndjson_line<T: Serialize>(w: &mut impl Write, path: &Path, v: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, v)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))
}

/// Calls `f` with batches of records from an ndjson file.
fn for_ndjson_batches<T: serde::de::DeserializeOwned>(path: &Path, mut f: impl FnMut(Vec<T>) -> Result<()>) -> Result<()> {
    let mut batch = Vec::with_capacity(BATCH_JOURNEYS);
    for line in open(path)?.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        batch.push(serde_json::from_str(&line)?);
        if batch.len() == BATCH_JOURNEYS {
            f(std::mem::take(&mut batch))?;
        }
    }
    if !batch.is_empty() {
        f(batch)?;
    }
    Ok(())
}

/// Points → validated journeys in `journeys.ndjson`.
pub fn run_ingest(cfg: &PipelineConfig) -> Result<StageRecord> {
    let out = out_dir(cfg)?;
    let path = out.join(JOURNEYS_FILE);
    let mut w = create(&path)?;
    let mut ex = Extractor::new(cfg)?;
    ex.stream(in_stage("ingest", open(&cfg.input.points))?, |ex, batch| {
        for j in ex.validate(batch) {
            in_stage("ingest", write_ndjson_line(&mut w, &path, &j))?;
        }
        Ok(())
    })?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(ex.report.ingest_record())
}

/// `journeys.ndjson` → `matched.ndjson`.
pub fn run_enrich(cfg: &PipelineConfig) -> Result<StageRecord> {
    let out = out_dir(cfg)?;
    let (index, _) = load_index(cfg)?;
    let path = out.join(MATCHED_FILE);
    let mut w = create(&path)?;
    let mut ex = Extractor::new(cfg)?;
    in_stage("enrich", for_ndjson_batches(&out.join(JOURNEYS_FILE), |batch: Vec<Journey>| {
        ex.report.validated += batch.len() as u64;
        for mj in ex.enrich(batch, &index) {
            write_ndjson_line(&mut w, &path, &mj)?;
        }
        Ok(())
    }))?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(ex.report.enrich_record())
}

/// `matched.ndjson` → `features.csv`; returns the kinematics and features records.
pub fn run_features(cfg: &PipelineConfig) -> Result<Vec<StageRecord>> {
    let out = out_dir(cfg)?;
    let mut writer = FeatureCsvWriter::new(create(&out.join(FEATURES_FILE))?)?;
    let mut ex = Extractor::new(cfg)?;
    in_stage("features", for_ndjson_batches(&out.join(MATCHED_FILE), |batch: Vec<MatchedJourney>| {
        ex.report.matched += batch.len() as u64;
        for (mj, row) in batch.iter().zip(ex.featurize(&batch)) {
            if let Ok(f) = row {
                writer.write(&mj.journey_id, &f)?;
            }
        }
        Ok(())
    }))?;
    in_stage("features", writer.finish())?;
    Ok(vec![ex.report.kinematics_record(), ex.report.features_record()])
}

fn load_features(cfg: &PipelineConfig, warnings: &mut Vec<String>) -> Result<(FeatureMatrix, u64, u64)> {
    let rows = read_features_csv(open(&cfg.output_dir.join(FEATURES_FILE))?)?;
    assemble(cfg, rows, warnings)
}

fn load_models(cfg: &PipelineConfig) -> Result<Vec<TrainedModel>> {
    cfg.models
        .kinds()?
        .into_iter()
        .map(|k| {
            let path = model_path(&cfg.output_dir, k);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            TrainedModel::from_json(&text)
        })
        .collect()
}

/// `features.csv` → `split.json` and `models/`.
pub fn run_train(cfg: &PipelineConfig) -> Result<(Vec<StageRecord>, Vec<String>)> {
    let out = out_dir(cfg)?;
    let mut warnings = Vec::new();
    let (data, rows_in, dropped) = in_stage("split", load_features(cfg, &mut warnings))?;
    let (split, rec) = in_stage("split", split_with_assembly(cfg, &data, rows_in, dropped, out))?;
    let (_, train) = in_stage("train", train_stage(cfg, &data, &split, out))?;
    Ok((vec![rec, train], warnings))
}

pub fn run_evaluate(cfg: &PipelineConfig) -> Result<StageRecord> {
    in_stage("evaluate", (|| {
        let (data, _, _) = load_features(cfg, &mut Vec::new())?;
        let split: SplitResult = read_json(&cfg.output_dir.join(SPLIT_FILE))?;
        Ok(evaluate_stage(&data, &split, &load_models(cfg)?, &cfg.output_dir)?.1)
    })())
}

pub fn run_explain(cfg: &PipelineConfig) -> Result<StageRecord> {
    in_stage("explain", (|| {
        let (data, _, _) = load_features(cfg, &mut Vec::new())?;
        let split: SplitResult = read_json(&cfg.output_dir.join(SPLIT_FILE))?;
        let kind = cfg.models.explain_kind()?;
        let path = model_path(&cfg.output_dir, kind);
        let model = TrainedModel::from_json(&std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?)?;
        explain_stage(cfg, &data, &split, &model, &cfg.output_dir)
    })())
}

/// `matched.ndjson` → hotspot GeoJSON and CSV.
pub fn run_hotspots(cfg: &PipelineConfig) -> Result<StageRecord> {
    let out = out_dir(cfg)?;
    let (index, _) = load_index(cfg)?;
    in_stage("hotspots", (|| {
        let mut hot = HotspotAggregator::new(cfg.hotspot.statistic);
        for_ndjson_batches(&out.join(MATCHED_FILE), |batch: Vec<MatchedJourney>| {
            batch.iter().flat_map(|mj| &mj.points).try_for_each(|p| hot.add_point(p))
        })?;
        hotspot_stage(cfg, hot.finish(), index.network(), out)
    })())
}

#[cfg(test)]
mod tests;
