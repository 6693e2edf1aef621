//! Train/test splitting, the five classifiers, prediction and tuning.

mod boost;
mod forest;
mod lda;
pub mod loss;
mod split;
mod standardize;
mod svm;
pub mod tree;
mod tune;

pub use boost::{tree_penalty, BoostKind, BoostLog, BoostParams, BoostedModel};
pub use forest::{ForestModel, ForestParams};
pub use lda::{LdaModel, LdaParams};
pub use split::{split_dataset, test_size, SplitResult};
pub use standardize::Standardizer;
pub use svm::{hinge_sum, primal_objective, SvmModel, SvmParams};
pub use tree::{train_tree, DecisionTree, Node, TreeParams};
pub use tune::{tune, write_tune_log, TuneCell, TuneGrid, TuneResult};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Score given to classes that never occur in training. Finite so that
/// scores stay comparable and serialisable.
pub const ABSENT_CLASS_SCORE: f64 = -1e9;

pub const MODEL_FORMAT: &str = "speedlens-model";
pub const MODEL_VERSION: u32 = 1;

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn class_counts(labels: &[usize], n_classes: usize) -> Vec<usize> {
    let mut c = vec![0; n_classes];
    for &y in labels {
        c[y] += 1;
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "LDA")]
    Lda,
    #[serde(rename = "LinearSVM")]
    LinearSvm,
    #[serde(rename = "RF")]
    Rf,
    #[serde(rename = "GBM")]
    Gbm,
    #[serde(rename = "XGB")]
    Xgb,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Lda,
        ModelKind::LinearSvm,
        ModelKind::Rf,
        ModelKind::Gbm,
        ModelKind::Xgb,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Lda => "LDA",
            ModelKind::LinearSvm => "LinearSVM",
            ModelKind::Rf => "RF",
            ModelKind::Gbm => "GBM",
            ModelKind::Xgb => "XGB",
        }
    }

    pub fn is_tree(self) -> bool {
        matches!(self, ModelKind::Rf | ModelKind::Gbm | ModelKind::Xgb)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum ModelParams {
    #[serde(rename = "LDA")]
    Lda(LdaModel),
    #[serde(rename = "LinearSVM")]
    LinearSvm(SvmModel),
    #[serde(rename = "RF")]
    Rf(ForestModel),
    #[serde(rename = "GBM")]
    Gbm(BoostedModel),
    #[serde(rename = "XGB")]
    Xgb(BoostedModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub feature_names: Vec<String>,
    pub n_classes: usize,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument<M> {
    format: String,
    version: u32,
    model: M,
}

/// Per-model training settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnConfig {
    pub lda: LdaParams,
    pub svm: SvmParams,
    pub rf: ForestParams,
    pub gbm: BoostParams,
    pub xgb: BoostParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub levels: Vec<usize>,
    pub scores: Matrix,
}

fn check_training(x: &Matrix, labels: &[usize], n_classes: usize) -> Result<()> {
    if x.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if x.n_rows() != labels.len() {
        return Err(Error::LengthMismatch(x.n_rows(), labels.len()));
    }
    if let Some(&label) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(Error::LabelOutOfRange {
            label,
            classes: n_classes,
        });
    }
    if let Some(i) = (0..x.n_rows()).find(|&i| x.row(i).iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self.params {
            ModelParams::Lda(_) => ModelKind::Lda,
            ModelParams::LinearSvm(_) => ModelKind::LinearSvm,
            ModelParams::Rf(_) => ModelKind::Rf,
            ModelParams::Gbm(_) => ModelKind::Gbm,
            ModelParams::Xgb(_) => ModelKind::Xgb,
        }
    }

    pub fn train(
        kind: ModelKind,
        x: &Matrix,
        labels: &[usize],
        n_classes: usize,
        feature_names: Vec<String>,
        cfg: &LearnConfig,
    ) -> Result<Self> {
        check_training(x, labels, n_classes)?;
        if feature_names.len() != x.n_cols() {
            return Err(Error::WidthMismatch {
                expected: x.n_cols(),
                found: feature_names.len(),
            });
        }
        let params = match kind {
            ModelKind::Lda => ModelParams::Lda(LdaModel::fit(x, labels, n_classes, &cfg.lda)?),
            ModelKind::LinearSvm => ModelParams::LinearSvm(SvmModel::fit(x, labels, n_classes, &cfg.svm)?),
            ModelKind::Rf => ModelParams::Rf(ForestModel::fit(x, labels, n_classes, &cfg.rf)?),
            ModelKind::Gbm => {
                ModelParams::Gbm(BoostedModel::fit(x, labels, n_classes, &cfg.gbm, BoostKind::FirstOrder)?.0)
            }
            ModelKind::Xgb => {
                ModelParams::Xgb(BoostedModel::fit(x, labels, n_classes, &cfg.xgb, BoostKind::SecondOrder)?.0)
            }
        };
        Ok(TrainedModel {
            feature_names,
            n_classes,
            params,
        })
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Raw per-class scores (margins, discriminants or vote shares) for one row.
    pub fn scores_row(&self, row: &[f64], out: &mut [f64]) {
        match &self.params {
            ModelParams::Lda(m) => m.scores_row(row, out),
            ModelParams::LinearSvm(m) => m.scores_row(row, out),
            ModelParams::Rf(m) => m.scores_row(row, out),
            ModelParams::Gbm(m) | ModelParams::Xgb(m) => m.scores_row(row, out),
        }
    }

    pub fn predict(&self, rows: &Matrix) -> Result<Prediction> {
        if rows.n_cols() != self.n_features() {
            return Err(Error::WidthMismatch {
                expected: self.n_features(),
                found: rows.n_cols(),
            });
        }
        let k = self.n_classes;
        let mut data = vec![0.0; rows.n_rows() * k];
        data.par_chunks_mut(k.max(1))
            .enumerate()
            .for_each(|(i, out)| self.scores_row(rows.row(i), out));
        let levels = data.chunks(k.max(1)).map(argmax).collect();
        Ok(Prediction {
            levels,
            scores: Matrix::new(rows.n_rows(), k, data)?,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelDocument {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self,
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDocument<serde_json::Value> = serde_json::from_str(s)?;
        if doc.format != MODEL_FORMAT {
            return Err(Error::Schema(format!("not a model document: `{}`", doc.format)));
        }
        if doc.version != MODEL_VERSION {
            return Err(Error::ModelVersion(doc.version));
        }
        Ok(serde_json::from_value(doc.model)?)
    }

    /// SHA-256 of the serialised document.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Matrix, Vec<usize>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..60 {
            let a = (i as f64 * 0.7).sin();
            let b = (i as f64 * 1.3).cos();
            rows.push([a, b, a * b]);
            y.push(usize::from(a > 0.0) + usize::from(b > 0.3));
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    fn small_cfg() -> LearnConfig {
        let boost = BoostParams {
            n_trees: 10,
            max_depth: 3,
            ..BoostParams::default()
        };
        LearnConfig {
            rf: ForestParams {
                n_trees: 10,
                ..ForestParams::default()
            },
            gbm: boost.clone(),
            xgb: boost,
            svm: SvmParams {
                epochs: 50,
                ..SvmParams::default()
            },
            ..LearnConfig::default()
        }
    }

    #[test]
    fn every_kind_round_trips_and_is_deterministic() {
        let (x, y) = toy();
        let names: Vec<String> = ["a", "b", "ab"].map(String::from).to_vec();
        for kind in ModelKind::ALL {
            let m = TrainedModel::train(kind, &x, &y, 6, names.clone(), &small_cfg()).unwrap();
            let again = TrainedModel::train(kind, &x, &y, 6, names.clone(), &small_cfg()).unwrap();
            assert_eq!(m.to_json().unwrap(), again.to_json().unwrap(), "{kind}");
            let back = TrainedModel::from_json(&m.to_json().unwrap()).unwrap();
            assert_eq!(back.predict(&x).unwrap(), m.predict(&x).unwrap(), "{kind}");
            let p = m.predict(&x).unwrap();
            assert!(p.scores.as_slice().iter().all(|v| v.is_finite()));
            assert_eq!(p.scores.n_cols(), 6);
        }
    }

    #[test]
    fn width_mismatch_and_version_checked() {
        let (x, y) = toy();
        let m = TrainedModel::train(ModelKind::Lda, &x, &y, 6, vec!["a".into(), "b".into(), "c".into()], &small_cfg())
            .unwrap();
        assert!(matches!(
            m.predict(&Matrix::zeros(2, 2)),
            Err(Error::WidthMismatch { expected: 3, found: 2 })
        ));
        let doc = m.to_json().unwrap().replace("\"version\":1", "\"version\":99");
        assert!(matches!(TrainedModel::from_json(&doc), Err(Error::ModelVersion(99))));
    }

    #[test]
    fn permuting_rows_permutes_outputs() {
        let (x, y) = toy();
        let m = TrainedModel::train(ModelKind::Xgb, &x, &y, 6, vec!["a".into(), "b".into(), "c".into()], &small_cfg())
            .unwrap();
        let order: Vec<usize> = (0..x.n_rows()).rev().collect();
        let p = m.predict(&x).unwrap();
        let q = m.predict(&x.select_rows(&order)).unwrap();
        for (i, &j) in order.iter().enumerate() {
            assert_eq!(q.scores.row(i), p.scores.row(j));
            assert_eq!(q.levels[i], p.levels[j]);
        }
    }

    #[test]
    fn zero_round_model_is_constant() {
        let m = TrainedModel {
            feature_names: vec!["a".into()],
            n_classes: 3,
            params: ModelParams::Xgb(BoostedModel {
                base_scores: vec![-1.0, -0.5, -2.0],
                learning_rate: 0.3,
                rounds: Vec::new(),
            }),
        };
        let p = m.predict(&Matrix::from_rows(&[[1.0], [5.0], [-3.0]]).unwrap()).unwrap();
        assert_eq!(p.levels, vec![1, 1, 1]);
        assert!(p.scores.rows().all(|r| r == [-1.0, -0.5, -2.0]));
    }

    #[test]
    fn kind_names_parse() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert!("svm2".parse::<ModelKind>().is_err());
    }
}
