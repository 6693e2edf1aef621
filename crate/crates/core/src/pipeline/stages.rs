//! Split, train, evaluate, explain and hotspot stages.
//!
//! Each writes its artifacts under a directory and returns the stage's row
//! counts. They are shared by the all-in-one run and the single-stage
//! subcommands.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::evaluate::{class_metrics, confusion_matrix, neighbor_error_share, within_k_accuracy, write_report_csv, EvaluationReport};
use crate::explain::{
    dependence_curve, feature_importance, shap_values, tsne_embed, write_dependence_csv, write_embedding_csv, write_shap_csv,
    DependenceCurve, ShapMatrix,
};
use crate::features::{FeatureMatrix, N_LEVELS};
use crate::hotspot::{filter_hotspots, write_hotspots_csv, write_hotspots_geojson, HotspotReport};
use crate::learn::loss::softmax;
use crate::learn::{split_dataset, tune, write_tune_log, BoostKind, ModelKind, SplitResult, TrainedModel};
use crate::matrix::Matrix;
use crate::roadnet::RoadNetwork;

use super::{create, write_json, StageRecord};

pub const SPLIT_FILE: &str = "split.json";
pub const MODELS_DIR: &str = "models";
pub const EVALUATION_JSON: &str = "evaluation.json";
pub const EVALUATION_CSV: &str = "evaluation.csv";
pub const EXPLAIN_DIR: &str = "explain";
pub const HOTSPOTS_GEOJSON: &str = "hotspots.geojson";
pub const HOTSPOTS_CSV: &str = "hotspots.csv";

pub fn model_path(dir: &Path, kind: ModelKind) -> std::path::PathBuf {
    dir.join(MODELS_DIR).join(format!("{}.json", kind.as_str()))
}

fn labels_at(labels: &[usize], idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| labels[i]).collect()
}

pub fn split_stage(cfg: &PipelineConfig, data: &FeatureMatrix, dir: &Path) -> Result<(SplitResult, StageRecord)> {
    let s = &cfg.split;
    let split = split_dataset(&data.labels, s.test_ratio, s.seed, s.stratified)?;
    write_json(&dir.join(SPLIT_FILE), &split)?;
    let mut rec = StageRecord::new("split", data.labels.len() as u64, (split.train.len() + split.test.len()) as u64);
    rec.detail("train_rows", split.train.len());
    rec.detail("test_rows", split.test.len());
    Ok((split, rec))
}

/// Fits every configured model on the training rows, tuning the boosted ones
/// first when asked.
pub fn train_stage(
    cfg: &PipelineConfig,
    data: &FeatureMatrix,
    split: &SplitResult,
    dir: &Path,
) -> Result<(Vec<TrainedModel>, StageRecord)> {
    let x = data.x.select_rows(&split.train);
    let y = labels_at(&data.labels, &split.train);
    std::fs::create_dir_all(dir.join(MODELS_DIR)).map_err(|e| Error::io(dir.join(MODELS_DIR), e))?;
    let mut learn = cfg.learn.clone();
    let mut models = Vec::new();
    let mut rec = StageRecord::new("train", y.len() as u64, y.len() as u64);
    for kind in cfg.models.kinds()? {
        let boost = match kind {
            ModelKind::Gbm => Some((&mut learn.gbm, BoostKind::FirstOrder)),
            ModelKind::Xgb => Some((&mut learn.xgb, BoostKind::SecondOrder)),
            _ => None,
        };
        if let (true, Some((params, bk))) = (cfg.models.tune, boost) {
            let m = &cfg.models;
            let res = tune(&x, &y, N_LEVELS, params, bk, &m.grid, m.holdout_ratio, m.tune_seed)?;
            let log = dir.join(MODELS_DIR).join(format!("tune_{}.csv", kind.as_str()));
            write_tune_log(create(&log)?, &res.cells)?;
            rec.detail(
                &format!("{}_tuned", kind.as_str()),
                serde_json::json!({"max_depth": res.best.max_depth, "n_trees": res.best.n_trees}),
            );
            *params = res.best;
        }
        let model = TrainedModel::train(kind, &x, &y, N_LEVELS, data.columns.clone(), &learn)?;
        let path = model_path(dir, kind);
        let mut w = create(&path)?;
        std::io::Write::write_all(&mut w, model.to_json()?.as_bytes()).map_err(|e| Error::io(&path, e))?;
        std::io::Write::flush(&mut w).map_err(|e| Error::io(&path, e))?;
        models.push(model);
    }
    rec.detail("models", models.iter().map(|m| m.kind().as_str()).collect::<Vec<_>>());
    Ok((models, rec))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub model: ModelKind,
    pub report: EvaluationReport,
    pub within_one: f64,
    pub neighbor_error_share: f64,
}

pub fn evaluate_stage(
    data: &FeatureMatrix,
    split: &SplitResult,
    models: &[TrainedModel],
    dir: &Path,
) -> Result<(Vec<ModelEvaluation>, StageRecord)> {
    let x = data.x.select_rows(&split.test);
    let y = labels_at(&data.labels, &split.test);
    let mut out = Vec::new();
    for m in models {
        let pred = m.predict(&x)?;
        let cm = confusion_matrix(&y, &pred.levels, N_LEVELS)?;
        out.push(ModelEvaluation {
            model: m.kind(),
            within_one: within_k_accuracy(&cm, 1),
            neighbor_error_share: neighbor_error_share(&cm),
            report: class_metrics(&cm)?,
        });
    }
    write_json(&dir.join(EVALUATION_JSON), &out)?;
    let named: Vec<(String, EvaluationReport)> = out.iter().map(|e| (e.model.as_str().to_string(), e.report.clone())).collect();
    write_report_csv(create(&dir.join(EVALUATION_CSV))?, &named)?;
    let mut rec = StageRecord::new("evaluate", y.len() as u64, y.len() as u64);
    for e in &out {
        rec.detail(&format!("{}_accuracy", e.model.as_str()), e.report.accuracy);
    }
    Ok((out, rec))
}

fn sample_rows(pool: &[usize], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = rand::seq::index::sample(&mut rng, pool.len(), k.min(pool.len())).into_vec();
    pick.sort_unstable();
    pick.into_iter().map(|i| pool[i]).collect()
}

/// Per-class probabilities used to colour the embedding. Forest scores are
/// already vote shares; everything else goes through softmax.
fn class_probabilities(model: &TrainedModel, scores: &Matrix) -> Matrix {
    let mut out = scores.clone();
    if model.kind() != ModelKind::Rf {
        for i in 0..scores.n_rows() {
            softmax(scores.row(i), out.row_mut(i));
        }
    }
    out
}

/// Features ordered by mean absolute attribution over rows and classes.
fn by_mean_abs_shap(shap: &ShapMatrix) -> Vec<usize> {
    let d = shap.feature_names.len();
    let mut total = vec![0.0; d];
    for c in &shap.classes {
        for r in c.values.rows() {
            for (t, v) in total.iter_mut().zip(r) {
                *t += v.abs();
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| total[b].total_cmp(&total[a]).then(a.cmp(&b)));
    order
}

/// Importance, per-class attributions, their embedding and dependence curves
/// for the configured model.
pub fn explain_stage(
    cfg: &PipelineConfig,
    data: &FeatureMatrix,
    split: &SplitResult,
    model: &TrainedModel,
    dir: &Path,
) -> Result<StageRecord> {
    let e = &cfg.explain;
    let out = dir.join(EXPLAIN_DIR);
    std::fs::create_dir_all(&out).map_err(|err| Error::io(&out, err))?;

    let rows = sample_rows(&split.test, e.shap_rows, e.sample_seed);
    let background = sample_rows(&split.train, e.background_rows, e.sample_seed.wrapping_add(1));
    let x = data.x.select_rows(&rows);
    let mut rec = StageRecord::new("explain", split.test.len() as u64, rows.len() as u64);
    rec.rejected.insert("not_sampled".into(), (split.test.len() - rows.len()) as u64);

    if model.kind().is_tree() {
        let mut table = feature_importance(model)?;
        if e.importance_top > 0 {
            table.rows.truncate(e.importance_top);
        }
        table.write_csv(create(&out.join("importance.csv"))?)?;
    }

    let shap = shap_values(model, &x, &data.x.select_rows(&background))?;
    for k in 0..shap.classes.len() {
        write_shap_csv(create(&out.join(format!("shap_level_{k}.csv")))?, &shap, k)?;
    }

    // concatenated per-class blocks, one row per sampled journey
    let d = shap.feature_names.len();
    let blocks: Vec<Vec<f64>> = (0..x.n_rows())
        .map(|i| shap.classes.iter().flat_map(|c| c.values.row(i).iter().copied()).collect())
        .collect();
    let z = Matrix::from_rows(&blocks)?;
    let emb = tsne_embed(&z, &e.tsne)?;
    let pred = model.predict(&x)?;
    let probs = class_probabilities(model, &pred.scores);
    let mut names: Vec<String> = (0..N_LEVELS).map(|k| format!("p_level_{k}")).collect();
    names.extend(["level".to_string(), "predicted".to_string()]);
    let extra: Vec<Vec<f64>> = (0..x.n_rows())
        .map(|i| {
            let mut r = probs.row(i).to_vec();
            r.push(data.labels[rows[i]] as f64);
            r.push(pred.levels[i] as f64);
            r
        })
        .collect();
    write_embedding_csv(create(&out.join("embedding.csv"))?, &emb, &names, &Matrix::from_rows(&extra)?)?;
    rec.detail("tsne_perplexity", emb.perplexity);
    rec.detail("tsne_kl_initial", emb.kl_initial);
    rec.detail("tsne_kl_final", emb.kl_final);

    let mut curves: Vec<DependenceCurve> = Vec::new();
    let mut skipped = Vec::new();
    for &j in by_mean_abs_shap(&shap).iter().take(e.dependence_features.min(d)) {
        let xs = x.column(j);
        for (k, c) in shap.classes.iter().enumerate() {
            match dependence_curve(&shap.feature_names[j], k, &xs, &c.values.column(j), None) {
                Ok(curve) => curves.push(curve),
                Err(_) => skipped.push(format!("{}/{k}", shap.feature_names[j])),
            }
        }
    }
    write_dependence_csv(create(&out.join("dependence.csv"))?, &curves)?;
    write_json(&out.join("dependence.json"), &curves)?;
    rec.detail("dependence_curves", curves.len());
    rec.detail("dependence_skipped", skipped);
    Ok(rec)
}

pub fn hotspot_stage(cfg: &PipelineConfig, report: HotspotReport, network: &RoadNetwork, dir: &Path) -> Result<StageRecord> {
    let hot = filter_hotspots(&report.segments, cfg.hotspot.min_points);
    write_hotspots_geojson(create(&dir.join(HOTSPOTS_GEOJSON))?, &hot, network)?;
    write_hotspots_csv(create(&dir.join(HOTSPOTS_CSV))?, &hot)?;
    let n = report.segments.len() as u64;
    let mut rec = StageRecord::new("hotspots", n, hot.len() as u64);
    rec.rejected.insert("below_min_points".into(), n - hot.len() as u64);
    rec.detail("points", report.total_points);
    rec.detail("unmatched_points", report.skipped_unmatched);
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_seeded_sorted_and_capped() {
        let pool: Vec<usize> = (100..200).collect();
        let a = sample_rows(&pool, 10, 3);
        assert_eq!(a, sample_rows(&pool, 10, 3));
        assert_ne!(a, sample_rows(&pool, 10, 4));
        assert!(a.windows(2).all(|w| w[0] < w[1]) && a.iter().all(|i| pool.contains(i)));
        assert_eq!(sample_rows(&pool, 500, 3), pool);
    }
}
