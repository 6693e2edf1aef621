//! Feature importance, Shapley attributions, t-SNE and dependence curves.

mod dependence;
mod shap;
mod tsne;

pub use dependence::{
    dependence_curve, write_dependence_csv, DegreeFit, DependenceCurve, CURVE_POINTS, MAX_DEGREE,
    SELECTION_TOLERANCE,
};
pub use shap::{shap_values, tree_expectation, tree_shap, write_shap_csv, ShapClass, ShapMatrix};
pub use tsne::{tsne_embed, write_embedding_csv, Embedding2D, TsneParams};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::{DecisionTree, ModelParams, Node, TrainedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub feature: String,
    pub index: usize,
    pub gain: f64,
    pub rank: usize,
}

/// Features that carry at least one split, by descending total gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub rows: Vec<ImportanceRow>,
}

impl ImportanceTable {
    pub fn total_gain(&self) -> f64 {
        self.rows.iter().map(|r| r.gain).sum()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["rank", "feature", "gain"])?;
        for r in &self.rows {
            out.write_record([r.rank.to_string(), r.feature.clone(), r.gain.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn trees_of(model: &TrainedModel) -> Result<Vec<&DecisionTree>> {
    match &model.params {
        ModelParams::Rf(f) => Ok(f.trees.iter().collect()),
        ModelParams::Gbm(b) | ModelParams::Xgb(b) => Ok(b.rounds.iter().flatten().collect()),
        ModelParams::Lda(_) => Err(Error::NotATreeModel("LDA")),
        ModelParams::LinearSvm(_) => Err(Error::NotATreeModel("LinearSVM")),
    }
}

/// Realized split gain per feature, summed over trees in training order.
pub fn gain_by_feature(model: &TrainedModel) -> Result<Vec<f64>> {
    let mut gain = vec![0.0; model.n_features()];
    for t in trees_of(model)? {
        for n in &t.nodes {
            if let Node::Split { feature, gain: g, .. } = n {
                gain[*feature as usize] += g;
            }
        }
    }
    Ok(gain)
}

pub fn feature_importance(model: &TrainedModel) -> Result<ImportanceTable> {
    let gain = gain_by_feature(model)?;
    let mut used = vec![false; gain.len()];
    for t in trees_of(model)? {
        for n in &t.nodes {
            if let Node::Split { feature, .. } = n {
                used[*feature as usize] = true;
            }
        }
    }
    let mut idx: Vec<usize> = (0..gain.len()).filter(|&j| used[j]).collect();
    idx.sort_by(|&a, &b| gain[b].total_cmp(&gain[a]).then(a.cmp(&b)));
    Ok(ImportanceTable {
        rows: idx
            .into_iter()
            .enumerate()
            .map(|(r, j)| ImportanceRow {
                feature: model.feature_names[j].clone(),
                index: j,
                gain: gain[j],
                rank: r + 1,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{BoostKind, BoostParams, BoostedModel, LearnConfig, ModelKind};
    use crate::matrix::Matrix;

    fn planted(n: usize) -> (Matrix, Vec<usize>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let a = ((i * 37) % 101) as f64;
            let noise = [((i * 13) % 7) as f64, ((i * 29) % 11) as f64, ((i * 3) % 5) as f64];
            rows.push([noise[0], noise[1], noise[2], a]);
            y.push(usize::from(a > 50.0) + usize::from(a > 80.0));
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn planted_feature_ranks_first() {
        let (x, y) = planted(400);
        let names: Vec<String> = ["n0", "n1", "n2", "signal"].map(String::from).to_vec();
        for kind in [ModelKind::Rf, ModelKind::Gbm, ModelKind::Xgb] {
            let m = TrainedModel::train(kind, &x, &y, 6, names.clone(), &LearnConfig::default()).unwrap();
            let t = feature_importance(&m).unwrap();
            assert_eq!(t.rows[0].feature, "signal", "{kind}");
            assert!(t.rows.windows(2).all(|w| w[0].gain >= w[1].gain && w[1].rank == w[0].rank + 1));
        }
    }

    #[test]
    fn gains_match_the_training_log() {
        let (x, y) = planted(300);
        let params = BoostParams {
            n_trees: 20,
            max_depth: 4,
            ..BoostParams::default()
        };
        let (b, log) = BoostedModel::fit(&x, &y, 6, &params, BoostKind::SecondOrder).unwrap();
        let m = TrainedModel {
            feature_names: (0..4).map(|j| format!("f{j}")).collect(),
            n_classes: 6,
            params: ModelParams::Xgb(b),
        };
        assert_eq!(gain_by_feature(&m).unwrap(), log.gain_by_feature);
        let total: f64 = log.gain_by_feature.iter().sum();
        assert!((feature_importance(&m).unwrap().total_gain() - total).abs() <= 1e-9 * total);
    }

    #[test]
    fn single_feature_and_empty_models() {
        let (x, y) = planted(200);
        let only: Vec<usize> = vec![3];
        let xs = x.select_cols(&only);
        let m = TrainedModel::train(ModelKind::Xgb, &xs, &y, 6, vec!["a".into()], &LearnConfig::default()).unwrap();
        let t = feature_importance(&m).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].gain, t.total_gain());

        let empty = TrainedModel {
            feature_names: vec!["a".into()],
            n_classes: 2,
            params: ModelParams::Gbm(BoostedModel {
                base_scores: vec![0.0, 0.0],
                learning_rate: 0.1,
                rounds: Vec::new(),
            }),
        };
        assert!(feature_importance(&empty).unwrap().rows.is_empty());
        let lda = TrainedModel::train(ModelKind::Lda, &x, &y, 6, (0..4).map(|j| format!("f{j}")).collect(), &LearnConfig::default())
            .unwrap();
        assert!(matches!(feature_importance(&lda), Err(Error::NotATreeModel("LDA"))));
    }
}
