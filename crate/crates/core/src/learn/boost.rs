//! Softmax gradient boosting, one regression tree per class per round.
//!
//! Both variants start from the training class log-priors and add `η·f_t`
//! each round. The first-order variant chooses splits by squared-error
//! reduction on the gradients and only uses the Hessian for its leaf values;
//! the second-order variant scores splits with
//! `½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)] − γ` and sets leaves to
//! `−G/(H+λ)`.

use serde::{Deserialize, Serialize};

use super::class_counts;
use super::loss::{grad_hess, mean_log_loss};
use super::tree::{grow_tree, DecisionTree, Node, SortedFeatures, Target, TreeParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Floor for the prior of a class absent from training.
const MIN_PRIOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub reg_lambda: f64,
    pub reg_gamma: f64,
    pub min_child_weight: f64,
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            n_trees: 100,
            max_depth: 6,
            learning_rate: 0.3,
            reg_lambda: 1.0,
            reg_gamma: 0.0,
            min_child_weight: 1.0,
            seed: 0,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_trees >= 1
            && self.max_depth >= 1
            && self.learning_rate.is_finite()
            && self.learning_rate >= 0.0
            && self.reg_lambda >= 0.0
            && self.reg_gamma >= 0.0
            && self.min_child_weight >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid boosting parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoostKind {
    FirstOrder,
    SecondOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub base_scores: Vec<f64>,
    pub learning_rate: f64,
    /// `rounds[t][k]`; leaf values already include the learning rate.
    pub rounds: Vec<Vec<DecisionTree>>,
}

/// Per-round training trace.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoostLog {
    /// Mean training log-loss after each round.
    pub train_loss: Vec<f64>,
    /// Summed training log-loss plus `γT + ½λΣω²` over all trees so far.
    pub objective: Vec<f64>,
    /// Realized split gain per feature, accumulated as trees are grown.
    pub gain_by_feature: Vec<f64>,
}

/// `γT + ½λΣω²` of one tree.
pub fn tree_penalty(tree: &DecisionTree, lambda: f64, gamma: f64) -> f64 {
    let leaves: Vec<&[f64]> = tree.leaf_values().collect();
    gamma * leaves.len() as f64 + 0.5 * lambda * leaves.iter().flat_map(|v| v.iter()).map(|w| w * w).sum::<f64>()
}

impl BoostedModel {
    pub fn fit(
        x: &Matrix,
        labels: &[usize],
        n_classes: usize,
        params: &BoostParams,
        kind: BoostKind,
    ) -> Result<(Self, BoostLog)> {
        params.validate()?;
        let n = x.n_rows();
        let counts = class_counts(labels, n_classes);
        let base_scores: Vec<f64> = counts
            .iter()
            .map(|&c| (c as f64 / n as f64).max(MIN_PRIOR).ln())
            .collect();
        let sorted = SortedFeatures::new(x);
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_child_weight: params.min_child_weight,
            reg_lambda: params.reg_lambda,
            reg_gamma: params.reg_gamma,
            mtry: None,
        };
        let weights = vec![1.0; n];
        let ones = vec![1.0; n];
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

        let mut scores: Vec<f64> = (0..n).flat_map(|_| base_scores.iter().copied()).collect();
        let mut grad = vec![0.0; n * n_classes];
        let mut hess = vec![0.0; n * n_classes];
        let mut g_k = vec![0.0; n];
        let mut h_k = vec![0.0; n];
        let mut rounds = Vec::with_capacity(params.n_trees);
        let mut log = BoostLog {
            gain_by_feature: vec![0.0; x.n_cols()],
            ..BoostLog::default()
        };
        let mut penalty = 0.0;

        for _ in 0..params.n_trees {
            for i in 0..n {
                let s = i * n_classes..(i + 1) * n_classes;
                grad_hess(&scores[s.clone()], labels[i], &mut grad[s.clone()], &mut hess[s]);
            }
            let mut round = Vec::with_capacity(n_classes);
            for k in 0..n_classes {
                for i in 0..n {
                    g_k[i] = grad[i * n_classes + k];
                    h_k[i] = hess[i * n_classes + k];
                }
                let target = match kind {
                    BoostKind::FirstOrder => Target::Gradients {
                        split_grad: &g_k,
                        split_hess: &ones,
                        split_lambda: 0.0,
                        leaf_grad: &g_k,
                        leaf_hess: &h_k,
                    },
                    BoostKind::SecondOrder => Target::Gradients {
                        split_grad: &g_k,
                        split_hess: &h_k,
                        split_lambda: params.reg_lambda,
                        leaf_grad: &g_k,
                        leaf_hess: &h_k,
                    },
                };
                let mut tree = grow_tree(x, &sorted, &weights, target, &tree_params, &mut rng);
                for node in &mut tree.nodes {
                    match node {
                        Node::Leaf { value, .. } => value.iter_mut().for_each(|v| *v *= params.learning_rate),
                        Node::Split { feature, gain, .. } => log.gain_by_feature[*feature as usize] += *gain,
                    }
                }
                penalty += tree_penalty(&tree, params.reg_lambda, params.reg_gamma);
                round.push(tree);
            }
            for (i, r) in x.rows().enumerate() {
                for (k, t) in round.iter().enumerate() {
                    scores[i * n_classes + k] += t.predict_row(r)[0];
                }
            }
            let loss = mean_log_loss(&scores, n_classes, labels);
            log.train_loss.push(loss);
            log.objective.push(loss * n as f64 + penalty);
            rounds.push(round);
        }
        Ok((
            BoostedModel {
                base_scores,
                learning_rate: params.learning_rate,
                rounds,
            },
            log,
        ))
    }

    pub fn n_rounds(&self) -> usize {
        self.rounds.len()
    }

    /// Scores using only the first `rounds` rounds.
    pub fn scores_row_prefix(&self, row: &[f64], rounds: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.base_scores);
        for round in self.rounds.iter().take(rounds) {
            for (o, t) in out.iter_mut().zip(round) {
                *o += t.predict_row(row)[0];
            }
        }
    }

    pub fn scores_row(&self, row: &[f64], out: &mut [f64]) {
        self.scores_row_prefix(row, self.rounds.len(), out);
    }

    /// Drops every round after the first `rounds`.
    pub fn truncated(&self, rounds: usize) -> Self {
        BoostedModel {
            base_scores: self.base_scores.clone(),
            learning_rate: self.learning_rate,
            rounds: self.rounds.iter().take(rounds).cloned().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::argmax;

    fn rings(n: usize) -> (Matrix, Vec<usize>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let a = ((i * 37) % 97) as f64 / 97.0 * 2.0 - 1.0;
            let b = ((i * 53) % 89) as f64 / 89.0 * 2.0 - 1.0;
            let r = (a * a + b * b).sqrt();
            rows.push([a, b]);
            y.push(((r * 3.0) as usize).min(2));
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    fn accuracy(m: &BoostedModel, x: &Matrix, y: &[usize], k: usize) -> f64 {
        let mut s = vec![0.0; k];
        let hits = x.rows().zip(y).filter(|(r, &t)| {
            m.scores_row(r, &mut s);
            argmax(&s) == t
        });
        hits.count() as f64 / y.len() as f64
    }

    #[test]
    fn stump_separates_two_classes() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [10.0], [11.0], [12.0]]).unwrap();
        let y = [0, 0, 0, 1, 1, 1];
        let params = BoostParams {
            n_trees: 1,
            max_depth: 1,
            learning_rate: 1.0,
            ..BoostParams::default()
        };
        let (m, _) = BoostedModel::fit(&x, &y, 2, &params, BoostKind::FirstOrder).unwrap();
        assert_eq!(accuracy(&m, &x, &y, 2), 1.0);
    }

    #[test]
    fn zero_learning_rate_gives_priors() {
        let (x, y) = rings(200);
        let params = BoostParams {
            n_trees: 5,
            learning_rate: 0.0,
            ..BoostParams::default()
        };
        let (m, _) = BoostedModel::fit(&x, &y, 3, &params, BoostKind::FirstOrder).unwrap();
        let mut s = [0.0; 3];
        for r in x.rows() {
            m.scores_row(r, &mut s);
            assert_eq!(s.to_vec(), m.base_scores);
        }
    }

    #[test]
    fn loss_falls_with_rounds() {
        let (x, y) = rings(400);
        for kind in [BoostKind::FirstOrder, BoostKind::SecondOrder] {
            let params = BoostParams {
                n_trees: 50,
                max_depth: 3,
                learning_rate: 0.3,
                ..BoostParams::default()
            };
            let (_, log) = BoostedModel::fit(&x, &y, 3, &params, kind).unwrap();
            assert!(log.train_loss[49] < log.train_loss[4]);
            assert!(log.train_loss.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{kind:?}");
            if kind == BoostKind::SecondOrder {
                assert!(log.objective.windows(2).all(|w| w[1] <= w[0] + 1e-9));
            }
        }
    }

    #[test]
    fn huge_lambda_and_gamma_limits() {
        let (x, y) = rings(300);
        let params = BoostParams {
            n_trees: 3,
            reg_lambda: 1e9,
            ..BoostParams::default()
        };
        let (m, _) = BoostedModel::fit(&x, &y, 3, &params, BoostKind::SecondOrder).unwrap();
        for t in m.rounds.iter().flatten() {
            assert!(t.leaf_values().all(|v| v[0].abs() < 1e-6));
        }
        let params = BoostParams {
            n_trees: 3,
            reg_gamma: 1e6,
            ..BoostParams::default()
        };
        let (m, _) = BoostedModel::fit(&x, &y, 3, &params, BoostKind::SecondOrder).unwrap();
        assert!(m.rounds.iter().flatten().all(|t| t.nodes.len() == 1));
    }
}
