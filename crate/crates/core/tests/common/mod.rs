#![allow(dead_code)]

use speedlens::config::PipelineConfig;
use speedlens::features::JourneyFeatures;
use speedlens::pipeline::{extract_features, load_index, ExtractReport};
use speedlens::synth::{generate_synthetic, BundleFiles, SynthConfig, SyntheticTruth};
use std::path::Path;

/// Columns that are whole seconds or counts and must match exactly.
pub const EXACT: [&str; 9] = [
    "timeStopped_sum",
    "timeStoppedAtSignalized_sum",
    "timeStoppedAtUnsignalized_sum",
    "journeytime_sum",
    "isSignalized",
    "turn_sum",
    "hour",
    "dayofweek",
    "year",
];

pub const TOLERANCE: f64 = 1e-9;

pub fn write_bundle(cfg: &SynthConfig, dir: &Path) -> (BundleFiles, SyntheticTruth) {
    let b = generate_synthetic(cfg).expect("generator config is valid");
    let files = b.write(dir).expect("bundle written");
    (files, b.truth)
}

pub fn config_for(files: &BundleFiles, out: &Path) -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.input.points = files.points.clone();
    c.input.network = files.network.clone();
    c.output_dir = out.to_path_buf();
    c
}

/// Ingest through features with the given config, rows in output order.
pub fn extract(cfg: &PipelineConfig) -> (Vec<(String, JourneyFeatures)>, ExtractReport) {
    let (index, _) = load_index(cfg).expect("network loads");
    let points = std::io::BufReader::new(std::fs::File::open(&cfg.input.points).unwrap());
    let mut rows = Vec::new();
    let report = extract_features(
        cfg,
        &index,
        points,
        |id, f| {
            rows.push((id.to_string(), *f));
            Ok(())
        },
        |_| Ok(()),
    )
    .expect("extraction succeeds");
    (rows, report)
}

/// Every mismatch between recovered rows and generator truth, as text.
pub fn mismatches(rows: &[(String, JourneyFeatures)], truth: &SyntheticTruth) -> Vec<String> {
    let mut out = Vec::new();
    if rows.len() != truth.journeys.len() {
        out.push(format!("{} rows recovered for {} journeys", rows.len(), truth.journeys.len()));
    }
    for (id, got) in rows {
        let Some(j) = truth.journey(id) else {
            out.push(format!("{id}: not a generated journey"));
            continue;
        };
        let (g, w) = (got.values(), j.truth.values());
        for (k, name) in JourneyFeatures::COLUMNS.iter().enumerate() {
            let ok = if EXACT.contains(name) || *name == "speeding_level" {
                g[k] == w[k]
            } else {
                (g[k] - w[k]).abs() <= TOLERANCE
            };
            if !ok {
                out.push(format!("{id}.{name}: pipeline {} truth {}", g[k], w[k]));
            }
        }
    }
    out
}
