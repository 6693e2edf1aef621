//! Exact greedy decision trees.
//!
//! Trees grow level by level over feature orderings computed once per
//! training matrix. Every open node of a level is split in one pass per
//! feature; features are scanned in parallel and reduced in index order, so
//! the result does not depend on scheduling. Candidate thresholds are
//! midpoints between consecutive distinct values, and ties go to the lowest
//! feature index, then the lowest threshold.
//!
//! Rows with `x < threshold` go left.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

const NONE: u32 = u32::MAX;

/// Denominators below this get a zero leaf weight.
pub const HESSIAN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
        /// Realized split gain.
        gain: f64,
        /// Training weight reaching the node.
        cover: f64,
    },
    Leaf {
        value: Vec<f64>,
        cover: f64,
    },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => *cover,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "NestedTree", from = "NestedTree")]
pub struct DecisionTree {
    /// Root is node 0.
    pub nodes: Vec<Node>,
    pub n_outputs: usize,
}

impl DecisionTree {
    /// A one-leaf tree.
    pub fn constant(value: Vec<f64>, cover: f64) -> Self {
        DecisionTree {
            n_outputs: value.len(),
            nodes: vec![Node::Leaf { value, cover }],
        }
    }

    pub fn leaf_of(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if row[*feature as usize] < *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    }
                }
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> &[f64] {
        match &self.nodes[self.leaf_of(row)] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!("leaf_of returns leaves"),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &DecisionTree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, *left as usize).max(walk(t, *right as usize)),
            }
        }
        walk(self, 0)
    }

    pub fn leaf_values(&self) -> impl Iterator<Item = &[f64]> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value, .. } => Some(value.as_slice()),
            Node::Split { .. } => None,
        })
    }
}

/// Per-feature row orderings, ascending by value (ties by row index).
#[derive(Debug, Clone)]
pub struct SortedFeatures {
    order: Vec<Vec<u32>>,
}

impl SortedFeatures {
    pub fn new(x: &Matrix) -> Self {
        let order = (0..x.n_cols())
            .into_par_iter()
            .map(|j| {
                let mut idx: Vec<u32> = (0..x.n_rows() as u32).collect();
                idx.sort_by(|&a, &b| {
                    x.get(a as usize, j)
                        .total_cmp(&x.get(b as usize, j))
                        .then(a.cmp(&b))
                });
                idx
            })
            .collect();
        SortedFeatures { order }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Minimum split weight (row weight for Gini, Hessian sum otherwise) per child.
    pub min_child_weight: f64,
    pub reg_lambda: f64,
    pub reg_gamma: f64,
    /// Features drawn per node; `None` uses all.
    pub mtry: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 6,
            min_child_weight: 1.0,
            reg_lambda: 0.0,
            reg_gamma: 0.0,
            mtry: None,
        }
    }
}

/// What a tree is fit to.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    /// Gini impurity on labels; leaves hold the class distribution.
    Classes { labels: &'a [usize], n_classes: usize },
    /// Second-order gain on `split_*` statistics; leaves take the Newton
    /// weight `-G / (H + λ)` of the `leaf_*` statistics.
    Gradients {
        split_grad: &'a [f64],
        split_hess: &'a [f64],
        /// Regularisation applied in the split gain (leaf weights always use `reg_lambda`).
        split_lambda: f64,
        leaf_grad: &'a [f64],
        leaf_hess: &'a [f64],
    },
}

/// Closed-form optimal leaf weight.
pub fn leaf_weight(grad_sum: f64, hess_sum: f64, lambda: f64) -> f64 {
    if hess_sum + lambda < HESSIAN_FLOOR {
        0.0
    } else {
        -grad_sum / (hess_sum + lambda)
    }
}

/// Second-order split gain `½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)] − γ`.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr)) - gamma
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    gain: f64,
    threshold: f64,
}

/// Running statistics of one side of a split.
#[derive(Clone, Debug)]
enum Acc {
    Gini { weight: f64, counts: Vec<f64> },
    Grad { weight: f64, g: f64, h: f64 },
}

impl Acc {
    fn zero(target: &Target) -> Self {
        match target {
            Target::Classes { n_classes, .. } => Acc::Gini {
                weight: 0.0,
                counts: vec![0.0; *n_classes],
            },
            Target::Gradients { .. } => Acc::Grad {
                weight: 0.0,
                g: 0.0,
                h: 0.0,
            },
        }
    }

    #[inline]
    fn add(&mut self, target: &Target, row: usize, w: f64) {
        match (self, target) {
            (Acc::Gini { weight, counts }, Target::Classes { labels, .. }) => {
                *weight += w;
                counts[labels[row]] += w;
            }
            (
                Acc::Grad { weight, g, h },
                Target::Gradients {
                    split_grad,
                    split_hess,
                    ..
                },
            ) => {
                *weight += w;
                *g += w * split_grad[row];
                *h += w * split_hess[row];
            }
            _ => unreachable!("accumulator kind follows the target"),
        }
    }

    fn weight(&self) -> f64 {
        match self {
            Acc::Gini { weight, .. } | Acc::Grad { weight, .. } => *weight,
        }
    }
}

/// Gain of splitting `total` into `left` and `total - left`, if admissible.
fn gain_of(left: &Acc, total: &Acc, target: &Target, params: &TreeParams) -> Option<f64> {
    match (left, total) {
        (
            Acc::Gini { weight: wl, counts: cl },
            Acc::Gini { weight: wt, counts: ct },
        ) => {
            let wr = wt - wl;
            let min = params.min_child_weight.max(f64::MIN_POSITIVE);
            if *wl < min || wr < min {
                return None;
            }
            let (mut sl, mut sr, mut st) = (0.0, 0.0, 0.0);
            for (l, t) in cl.iter().zip(ct) {
                let r = t - l;
                sl += l * l;
                sr += r * r;
                st += t * t;
            }
            Some(sl / wl + sr / wr - st / wt)
        }
        (Acc::Grad { g: gl, h: hl, .. }, Acc::Grad { g: gt, h: ht, .. }) => {
            let (gr, hr) = (gt - gl, ht - hl);
            let Target::Gradients { split_lambda, .. } = target else {
                unreachable!()
            };
            if *hl < params.min_child_weight
                || hr < params.min_child_weight
                || hl + split_lambda < HESSIAN_FLOOR
                || hr + split_lambda < HESSIAN_FLOOR
            {
                return None;
            }
            Some(split_gain(*gl, *hl, gr, hr, *split_lambda, params.reg_gamma))
        }
        _ => unreachable!(),
    }
}

fn min_gain(total: &Acc) -> f64 {
    match total {
        // Gini gains are sums of squares; guard against round-off splits
        Acc::Gini { weight, .. } => 1e-12 * weight.max(1.0),
        Acc::Grad { .. } => 0.0,
    }
}

struct Open {
    node: usize,
    depth: usize,
    total: Acc,
    allowed: Option<Vec<bool>>,
}

/// Grows one tree. Rows with zero weight take no part in training.
pub fn grow_tree<R: Rng>(
    x: &Matrix,
    sorted: &SortedFeatures,
    weights: &[f64],
    target: Target,
    params: &TreeParams,
    rng: &mut R,
) -> DecisionTree {
    let n = x.n_rows();
    let d = x.n_cols();
    let mut row_node: Vec<u32> = weights.iter().map(|&w| if w > 0.0 { 0 } else { NONE }).collect();

    // placeholder nodes are overwritten once resolved
    let mut nodes: Vec<Node> = vec![Node::Leaf {
        value: Vec::new(),
        cover: 0.0,
    }];
    let mut root = Acc::zero(&target);
    for r in 0..n {
        if weights[r] > 0.0 {
            root.add(&target, r, weights[r]);
        }
    }
    let mut open = vec![Open {
        node: 0,
        depth: 0,
        total: root,
        allowed: None,
    }];

    while !open.is_empty() {
        // feature subsets are drawn in node order for reproducibility
        for o in open.iter_mut() {
            if let Some(m) = params.mtry.filter(|&m| m < d) {
                let mut mask = vec![false; d];
                for j in sample(rng, d, m.max(1)).into_iter() {
                    mask[j] = true;
                }
                o.allowed = Some(mask);
            }
        }
        let splittable: Vec<usize> = (0..open.len())
            .filter(|&s| open[s].depth < params.max_depth && open[s].total.weight() > 0.0)
            .collect();
        let mut slot_of_node = vec![NONE; nodes.len()];
        for (k, &s) in splittable.iter().enumerate() {
            slot_of_node[open[s].node] = k as u32;
        }

        let per_feature: Vec<Vec<Option<Candidate>>> = (0..d)
            .into_par_iter()
            .map(|j| {
                let mut left: Vec<Acc> = splittable.iter().map(|_| Acc::zero(&target)).collect();
                let mut last = vec![f64::NAN; splittable.len()];
                let mut best: Vec<Option<Candidate>> = vec![None; splittable.len()];
                for &r in &sorted.order[j] {
                    let r = r as usize;
                    let node = row_node[r];
                    if node == NONE {
                        continue;
                    }
                    let slot = slot_of_node[node as usize];
                    if slot == NONE {
                        continue;
                    }
                    let k = slot as usize;
                    let o = &open[splittable[k]];
                    if o.allowed.as_ref().is_some_and(|m| !m[j]) {
                        continue;
                    }
                    let v = x.get(r, j);
                    if left[k].weight() > 0.0 && v > last[k] {
                        if let Some(gain) = gain_of(&left[k], &o.total, &target, params) {
                            if best[k].is_none_or(|b| gain > b.gain) {
                                let mut threshold = 0.5 * (last[k] + v);
                                if threshold <= last[k] {
                                    threshold = v;
                                }
                                best[k] = Some(Candidate { gain, threshold });
                            }
                        }
                    }
                    left[k].add(&target, r, weights[r]);
                    last[k] = v;
                }
                best
            })
            .collect();

        let mut chosen: Vec<Option<(usize, Candidate)>> = vec![None; splittable.len()];
        for (j, cands) in per_feature.iter().enumerate() {
            for (k, c) in cands.iter().enumerate() {
                if let Some(c) = c {
                    let threshold_gain = min_gain(&open[splittable[k]].total);
                    if c.gain > threshold_gain && chosen[k].is_none_or(|(_, b)| c.gain > b.gain) {
                        chosen[k] = Some((j, *c));
                    }
                }
            }
        }

        // create children for chosen splits
        let mut child_of: Vec<Option<(usize, usize, usize, f64)>> = vec![None; nodes.len()];
        let mut next_open = Vec::new();
        for (k, &s) in splittable.iter().enumerate() {
            if let Some((feature, c)) = chosen[k] {
                let node = open[s].node;
                let (l, r) = (nodes.len(), nodes.len() + 1);
                nodes.push(Node::Leaf {
                    value: Vec::new(),
                    cover: 0.0,
                });
                nodes.push(Node::Leaf {
                    value: Vec::new(),
                    cover: 0.0,
                });
                nodes[node] = Node::Split {
                    feature: feature as u32,
                    threshold: c.threshold,
                    left: l as u32,
                    right: r as u32,
                    gain: c.gain,
                    cover: open[s].total.weight(),
                };
                child_of.resize(nodes.len(), None);
                child_of[node] = Some((feature, l, r, c.threshold));
                for child in [l, r] {
                    next_open.push(Open {
                        node: child,
                        depth: open[s].depth + 1,
                        total: Acc::zero(&target),
                        allowed: None,
                    });
                }
            }
        }

        // route rows of split nodes; rows of resolved leaves are parked
        let mut leaf_rows: Vec<usize> = Vec::new();
        let is_leaf: Vec<bool> = {
            let mut v = vec![false; nodes.len()];
            for o in &open {
                if child_of[o.node].is_none() {
                    v[o.node] = true;
                }
            }
            v
        };
        let first_new = next_open.first().map_or(nodes.len(), |o| o.node);
        for r in 0..n {
            let node = row_node[r];
            if node == NONE {
                continue;
            }
            let node = node as usize;
            if let Some((feature, l, rr, threshold)) = child_of.get(node).copied().flatten() {
                let child = if x.get(r, feature) < threshold { l } else { rr };
                row_node[r] = child as u32;
                next_open[child - first_new].total.add(&target, r, weights[r]);
            } else if is_leaf[node] {
                leaf_rows.push(r);
            }
        }

        finish_leaves(&open, &child_of, &leaf_rows, &row_node, weights, &target, params, &mut nodes);
        for &r in &leaf_rows {
            row_node[r] = NONE;
        }
        open = next_open;
    }

    DecisionTree {
        n_outputs: match target {
            Target::Classes { n_classes, .. } => n_classes,
            Target::Gradients { .. } => 1,
        },
        nodes,
    }
}

#[allow(clippy::too_many_arguments)]
fn finish_leaves(
    open: &[Open],
    child_of: &[Option<(usize, usize, usize, f64)>],
    leaf_rows: &[usize],
    row_node: &[u32],
    weights: &[f64],
    target: &Target,
    params: &TreeParams,
    nodes: &mut [Node],
) {
    for o in open.iter().filter(|o| child_of[o.node].is_none()) {
        let cover = o.total.weight();
        let value = match (target, &o.total) {
            (Target::Classes { n_classes, .. }, Acc::Gini { weight, counts }) => {
                if *weight > 0.0 {
                    counts.iter().map(|c| c / weight).collect()
                } else {
                    vec![0.0; *n_classes]
                }
            }
            (Target::Gradients { .. }, _) => Vec::new(),
            _ => unreachable!(),
        };
        nodes[o.node] = Node::Leaf { value, cover };
    }
    if let Target::Gradients {
        leaf_grad, leaf_hess, ..
    } = target
    {
        // leaf statistics may differ from the split statistics (first-order boosting)
        let mut sums: std::collections::BTreeMap<usize, (f64, f64)> = Default::default();
        for &r in leaf_rows {
            let e = sums.entry(row_node[r] as usize).or_default();
            e.0 += weights[r] * leaf_grad[r];
            e.1 += weights[r] * leaf_hess[r];
        }
        for o in open.iter().filter(|o| child_of[o.node].is_none()) {
            let (g, h) = sums.get(&o.node).copied().unwrap_or_default();
            if let Node::Leaf { value, .. } = &mut nodes[o.node] {
                *value = vec![leaf_weight(g, h, params.reg_lambda)];
            }
        }
    }
}

/// Plain classification tree on all rows with unit weights.
pub fn train_tree(x: &Matrix, labels: &[usize], n_classes: usize, params: &TreeParams) -> DecisionTree {
    let sorted = SortedFeatures::new(x);
    let weights = vec![1.0; x.n_rows()];
    grow_tree(
        x,
        &sorted,
        &weights,
        Target::Classes { labels, n_classes },
        params,
        &mut ChaCha8Rng::seed_from_u64(0),
    )
}

/// Serialized form: children nested inside their parent.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum NestedNode {
    Split {
        feature: u32,
        threshold: f64,
        gain: f64,
        cover: f64,
        left: Box<NestedNode>,
        right: Box<NestedNode>,
    },
    Leaf {
        value: Vec<f64>,
        cover: f64,
    },
}

#[derive(Serialize, Deserialize)]
struct NestedTree {
    n_outputs: usize,
    root: NestedNode,
}

impl From<DecisionTree> for NestedTree {
    fn from(t: DecisionTree) -> Self {
        fn nest(nodes: &[Node], i: usize) -> NestedNode {
            match &nodes[i] {
                Node::Leaf { value, cover } => NestedNode::Leaf {
                    value: value.clone(),
                    cover: *cover,
                },
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    gain,
                    cover,
                } => NestedNode::Split {
                    feature: *feature,
                    threshold: *threshold,
                    gain: *gain,
                    cover: *cover,
                    left: Box::new(nest(nodes, *left as usize)),
                    right: Box::new(nest(nodes, *right as usize)),
                },
            }
        }
        NestedTree {
            n_outputs: t.n_outputs,
            root: nest(&t.nodes, 0),
        }
    }
}

impl From<NestedTree> for DecisionTree {
    fn from(t: NestedTree) -> Self {
        // breadth-first numbering, matching the order trees are grown in
        let mut nodes = Vec::new();
        let mut queue = std::collections::VecDeque::from([t.root]);
        while let Some(n) = queue.pop_front() {
            match n {
                NestedNode::Leaf { value, cover } => nodes.push(Node::Leaf { value, cover }),
                NestedNode::Split {
                    feature,
                    threshold,
                    gain,
                    cover,
                    left,
                    right,
                } => {
                    let first = (nodes.len() + queue.len() + 1) as u32;
                    nodes.push(Node::Split {
                        feature,
                        threshold,
                        left: first,
                        right: first + 1,
                        gain,
                        cover,
                    });
                    queue.push_back(*left);
                    queue.push_back(*right);
                }
            }
        }
        DecisionTree {
            nodes,
            n_outputs: t.n_outputs,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn leaf_weight_closed_form() {
        assert_abs_diff_eq!(leaf_weight(-2.0, 2.0, 0.0), 1.0);
        assert_abs_diff_eq!(leaf_weight(-2.0, 2.0, 1.0), 2.0 / 3.0);
        assert_eq!(leaf_weight(-2.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn pure_node_stays_a_leaf() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let t = train_tree(&x, &[2, 2, 2], 3, &TreeParams::default());
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict_row(&[0.0]), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn separable_split_found() {
        let x = Matrix::from_rows(&[[1.0, 5.0], [2.0, 5.0], [3.0, 5.0], [4.0, 5.0]]).unwrap();
        let t = train_tree(&x, &[0, 0, 1, 1], 2, &TreeParams::default());
        match &t.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 2.5);
            }
            _ => panic!("expected a split"),
        }
        assert_eq!(t.n_leaves(), 2);
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // both features separate the classes identically
        let x = Matrix::from_rows(&[[1.0, 10.0], [2.0, 20.0], [3.0, 30.0], [4.0, 40.0]]).unwrap();
        let t = train_tree(&x, &[0, 0, 1, 1], 2, &TreeParams::default());
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn gradient_single_leaf_weight() {
        let x = Matrix::from_rows(&[[1.0], [1.0]]).unwrap();
        let sorted = SortedFeatures::new(&x);
        let g = [-1.0, -1.0];
        let h = [1.0, 1.0];
        for (lambda, want) in [(0.0, 1.0), (1.0, 2.0 / 3.0)] {
            let params = TreeParams {
                reg_lambda: lambda,
                ..TreeParams::default()
            };
            let t = grow_tree(
                &x,
                &sorted,
                &[1.0, 1.0],
                Target::Gradients {
                    split_grad: &g,
                    split_hess: &h,
                    split_lambda: lambda,
                    leaf_grad: &g,
                    leaf_hess: &h,
                },
                &params,
                &mut ChaCha8Rng::seed_from_u64(0),
            );
            assert_eq!(t.nodes.len(), 1);
            assert_abs_diff_eq!(t.predict_row(&[1.0])[0], want, epsilon = 1e-15);
        }
    }

    #[test]
    fn depth_limit_respected() {
        let rows: Vec<[f64; 1]> = (0..64).map(|i| [i as f64]).collect();
        let labels: Vec<usize> = (0..64).map(|i| i % 2).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let t = train_tree(
            &x,
            &labels,
            2,
            &TreeParams {
                max_depth: 3,
                ..TreeParams::default()
            },
        );
        assert!(t.depth() <= 3);
    }

    #[test]
    fn nested_serialization_round_trips() {
        let rows: Vec<[f64; 2]> = (0..50).map(|i| [i as f64, ((i * 7) % 11) as f64]).collect();
        let labels: Vec<usize> = (0..50).map(|i| (i % 3 + i / 17) % 3).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let t = train_tree(&x, &labels, 3, &TreeParams::default());
        assert!(t.nodes.len() > 3);
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("\"left\":{"));
        let back: DecisionTree = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }

    /// Second-order objective of a fixed tree: Σ g f + ½ h f² + ½λΣω² + γT.
    fn approx_objective(t: &DecisionTree, x: &Matrix, g: &[f64], h: &[f64], lambda: f64, gamma: f64) -> f64 {
        let mut total = 0.0;
        for (i, r) in x.rows().enumerate() {
            let f = t.predict_row(r)[0];
            total += g[i] * f + 0.5 * h[i] * f * f;
        }
        let leaves: Vec<f64> = t.leaf_values().map(|v| v[0]).collect();
        total + 0.5 * lambda * leaves.iter().map(|w| w * w).sum::<f64>() + gamma * leaves.len() as f64
    }

    #[test]
    fn leaf_weights_are_locally_optimal() {
        let n = 200;
        let rows: Vec<[f64; 3]> = (0..n)
            .map(|i| [((i * 13) % 29) as f64, ((i * 7) % 31) as f64, (i % 5) as f64])
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let g: Vec<f64> = (0..n).map(|i| ((i * 17) % 23) as f64 / 23.0 - 0.4).collect();
        let h: Vec<f64> = (0..n).map(|i| 0.05 + ((i * 11) % 19) as f64 / 80.0).collect();
        for (lambda, gamma) in [(0.0, 0.0), (1.0, 0.0), (2.5, 0.3)] {
            let params = TreeParams {
                max_depth: 3,
                reg_lambda: lambda,
                reg_gamma: gamma,
                ..TreeParams::default()
            };
            let t = grow_tree(
                &x,
                &SortedFeatures::new(&x),
                &vec![1.0; n],
                Target::Gradients {
                    split_grad: &g,
                    split_hess: &h,
                    split_lambda: lambda,
                    leaf_grad: &g,
                    leaf_hess: &h,
                },
                &params,
                &mut ChaCha8Rng::seed_from_u64(0),
            );
            let base = approx_objective(&t, &x, &g, &h, lambda, gamma);
            for i in 0..t.nodes.len() {
                if !matches!(t.nodes[i], Node::Leaf { .. }) {
                    continue;
                }
                for delta in [1e-3, -1e-3] {
                    let mut p = t.clone();
                    if let Node::Leaf { value, .. } = &mut p.nodes[i] {
                        value[0] += delta;
                    }
                    assert!(approx_objective(&p, &x, &g, &h, lambda, gamma) >= base);
                }
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn monotone_transform_keeps_partition(
            vals in proptest::collection::vec((-50i32..50, -50i32..50), 10..80),
            which in 0usize..2,
        ) {
            let rows: Vec<[f64; 2]> = vals.iter().map(|&(a, b)| [a as f64, b as f64]).collect();
            let labels: Vec<usize> = vals.iter().map(|&(a, b)| ((a + 2 * b).rem_euclid(3)) as usize).collect();
            let x = Matrix::from_rows(&rows).unwrap();
            let warped: Vec<[f64; 2]> = rows
                .iter()
                .map(|r| {
                    let mut r = *r;
                    r[which] = (r[which] / 7.0).exp() + 3.0 * r[which];
                    r
                })
                .collect();
            let xw = Matrix::from_rows(&warped).unwrap();
            let params = TreeParams { max_depth: 4, ..TreeParams::default() };
            let t = train_tree(&x, &labels, 3, &params);
            let tw = train_tree(&xw, &labels, 3, &params);
            proptest::prop_assert_eq!(t.nodes.len(), tw.nodes.len());
            for i in 0..x.n_rows() {
                proptest::prop_assert_eq!(t.leaf_of(x.row(i)), tw.leaf_of(xw.row(i)));
            }
        }
    }
}
