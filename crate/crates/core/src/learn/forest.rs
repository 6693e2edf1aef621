//! Bagged CART forests with per-node feature sampling and hard voting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::argmax;
use super::tree::{grow_tree, DecisionTree, Node, SortedFeatures, Target, TreeParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Features per split; `None` means `⌈√d⌉`.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub min_child_weight: f64,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 12,
            mtry: None,
            bootstrap: true,
            min_child_weight: 1.0,
            seed: 0,
        }
    }
}

/// Trees whose leaves are one-hot votes; scores are vote shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<DecisionTree>,
    pub mtry: usize,
}

impl ForestModel {
    pub fn fit(x: &Matrix, labels: &[usize], n_classes: usize, params: &ForestParams) -> Result<Self> {
        let d = x.n_cols();
        if params.n_trees == 0 || params.max_depth == 0 {
            return Err(Error::InvalidArgument("forest needs n_trees ≥ 1 and max_depth ≥ 1".into()));
        }
        let mtry = params.mtry.unwrap_or_else(|| (d as f64).sqrt().ceil() as usize);
        if mtry == 0 || mtry > d {
            return Err(Error::InvalidArgument(format!("mtry must be in 1..={d}, got {mtry}")));
        }
        let sorted = SortedFeatures::new(x);
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_child_weight: params.min_child_weight,
            mtry: Some(mtry),
            ..TreeParams::default()
        };
        let n = x.n_rows();
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                // one stream per tree keeps results independent of scheduling
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
                rng.set_stream(t as u64);
                let mut weights = vec![0.0; n];
                if params.bootstrap {
                    for _ in 0..n {
                        weights[rng.random_range(0..n)] += 1.0;
                    }
                } else {
                    weights.fill(1.0);
                }
                let mut tree = grow_tree(
                    x,
                    &sorted,
                    &weights,
                    Target::Classes { labels, n_classes },
                    &tree_params,
                    &mut rng,
                );
                for node in &mut tree.nodes {
                    if let Node::Leaf { value, .. } = node {
                        let win = argmax(value);
                        value.iter_mut().enumerate().for_each(|(k, v)| *v = f64::from(k == win));
                    }
                }
                tree
            })
            .collect();
        Ok(ForestModel { trees, mtry })
    }

    pub fn scores_row(&self, row: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for t in &self.trees {
            for (o, v) in out.iter_mut().zip(t.predict_row(row)) {
                *o += v;
            }
        }
        let n = self.trees.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::tree::train_tree;

    fn xor(n: usize) -> (Matrix, Vec<usize>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let a = ((i * 37) % 101) as f64 / 101.0 - 0.5;
            let b = ((i * 59) % 103) as f64 / 103.0 - 0.5;
            rows.push([a, b]);
            y.push(usize::from((a > 0.0) != (b > 0.0)));
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn xor_is_learned() {
        let (x, y) = xor(800);
        let m = ForestModel::fit(
            &x,
            &y,
            2,
            &ForestParams {
                max_depth: 4,
                seed: 3,
                ..ForestParams::default()
            },
        )
        .unwrap();
        let mut s = [0.0; 2];
        let hits = x.rows().zip(&y).filter(|(r, &t)| {
            m.scores_row(r, &mut s);
            argmax(&s) == t
        });
        assert!(hits.count() as f64 / 800.0 >= 0.95);
    }

    #[test]
    fn reduces_to_a_plain_tree() {
        let (x, y) = xor(300);
        let params = ForestParams {
            n_trees: 1,
            bootstrap: false,
            mtry: Some(2),
            max_depth: 5,
            ..ForestParams::default()
        };
        let forest = ForestModel::fit(&x, &y, 2, &params).unwrap();
        let tree = train_tree(
            &x,
            &y,
            2,
            &TreeParams {
                max_depth: 5,
                ..TreeParams::default()
            },
        );
        let mut s = [0.0; 2];
        for r in x.rows() {
            forest.scores_row(r, &mut s);
            assert_eq!(argmax(&s), argmax(tree.predict_row(r)));
            assert_eq!(forest.trees[0].leaf_of(r), tree.leaf_of(r));
        }
    }
}
