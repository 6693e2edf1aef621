//! Shapley attributions of per-class margins.
//!
//! Tree ensembles use the path-dependent tree algorithm: a feature outside
//! the coalition is integrated out by following both children in proportion
//! to their training cover. The base value is therefore each tree's
//! cover-weighted mean output, which is what makes `base + Σφ` reproduce the
//! margin exactly. Linear models attribute `w_j (z_j − mean_j)` against the
//! background mean.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::{DecisionTree, ModelParams, Node, TrainedModel};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapClass {
    /// Expected margin the attributions are measured from.
    pub base: f64,
    /// Mean margin over the background rows.
    pub background_mean: f64,
    /// Rows × features.
    pub values: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    pub feature_names: Vec<String>,
    pub classes: Vec<ShapClass>,
}

#[derive(Clone, Copy, Debug)]
struct PathElem {
    feature: Option<u32>,
    zero: f64,
    one: f64,
    weight: f64,
}

fn extend(path: &mut Vec<PathElem>, zero: f64, one: f64, feature: Option<u32>) {
    let l = path.len();
    path.push(PathElem {
        feature,
        zero,
        one,
        weight: if l == 0 { 1.0 } else { 0.0 },
    });
    let denom = (l + 1) as f64;
    for i in (0..l).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / denom;
        path[i].weight = zero * path[i].weight * (l - i) as f64 / denom;
    }
}

fn unwind(path: &mut Vec<PathElem>, i: usize) {
    let l = path.len() - 1;
    let (one, zero) = (path[i].one, path[i].zero);
    let mut next = path[l].weight;
    let lp1 = (l + 1) as f64;
    for j in (0..l).rev() {
        if one != 0.0 {
            let t = path[j].weight;
            path[j].weight = next * lp1 / ((j + 1) as f64 * one);
            next = t - path[j].weight * zero * (l - j) as f64 / lp1;
        } else {
            path[j].weight = path[j].weight * lp1 / (zero * (l - j) as f64);
        }
    }
    for j in i..l {
        path[j].feature = path[j + 1].feature;
        path[j].zero = path[j + 1].zero;
        path[j].one = path[j + 1].one;
    }
    path.pop();
}

/// Total weight of `path` after unwinding element `i`, without modifying it.
fn unwound_sum(path: &[PathElem], i: usize) -> f64 {
    let l = path.len() - 1;
    let (one, zero) = (path[i].one, path[i].zero);
    let lp1 = (l + 1) as f64;
    let mut next = path[l].weight;
    let mut total = 0.0;
    for j in (0..l).rev() {
        if one != 0.0 {
            let t = next * lp1 / ((j + 1) as f64 * one);
            total += t;
            next = path[j].weight - t * zero * (l - j) as f64 / lp1;
        } else {
            total += path[j].weight * lp1 / (zero * (l - j) as f64);
        }
    }
    total
}

/// Adds one tree's attributions for `row` into `phi` (features × outputs,
/// row-major), scaling leaf values by `scale`.
pub fn tree_shap(tree: &DecisionTree, row: &[f64], scale: f64, phi: &mut [f64]) {
    let n_out = tree.n_outputs;
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        tree: &DecisionTree,
        row: &[f64],
        scale: f64,
        n_out: usize,
        phi: &mut [f64],
        node: usize,
        mut path: Vec<PathElem>,
        zero: f64,
        one: f64,
        feature: Option<u32>,
    ) {
        extend(&mut path, zero, one, feature);
        match &tree.nodes[node] {
            Node::Leaf { value, .. } => {
                for i in 1..path.len() {
                    let w = unwound_sum(&path, i);
                    let el = path[i];
                    let f = el.feature.expect("only the root element has no feature") as usize;
                    let m = w * (el.one - el.zero) * scale;
                    for (o, v) in value.iter().enumerate().take(n_out) {
                        phi[f * n_out + o] += m * v;
                    }
                }
            }
            Node::Split {
                feature: split,
                threshold,
                left,
                right,
                cover,
                ..
            } => {
                let (hot, cold) = if row[*split as usize] < *threshold {
                    (*left as usize, *right as usize)
                } else {
                    (*right as usize, *left as usize)
                };
                let (mut iz, mut io) = (1.0, 1.0);
                if let Some(k) = (1..path.len()).find(|&k| path[k].feature == Some(*split)) {
                    iz = path[k].zero;
                    io = path[k].one;
                    unwind(&mut path, k);
                }
                let r = if *cover > 0.0 { *cover } else { 1.0 };
                let rh = tree.nodes[hot].cover() / r;
                let rc = tree.nodes[cold].cover() / r;
                recurse(tree, row, scale, n_out, phi, hot, path.clone(), iz * rh, io, Some(*split));
                recurse(tree, row, scale, n_out, phi, cold, path, iz * rc, 0.0, Some(*split));
            }
        }
    }
    recurse(tree, row, scale, n_out, phi, 0, Vec::with_capacity(16), 1.0, 1.0, None);
}

/// Cover-weighted mean output of a tree, per output.
pub fn tree_expectation(tree: &DecisionTree) -> Vec<f64> {
    let root = tree.nodes[0].cover();
    let mut out = vec![0.0; tree.n_outputs];
    for n in &tree.nodes {
        if let Node::Leaf { value, cover } = n {
            let w = if root > 0.0 { cover / root } else { 0.0 };
            for (o, v) in out.iter_mut().zip(value) {
                *o += w * v;
            }
        }
    }
    out
}

fn check_finite(rows: &Matrix) -> Result<()> {
    match (0..rows.n_rows()).find(|&i| rows.row(i).iter().any(|v| !v.is_finite())) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

/// Per-class attributions of `model`'s margins on `rows`.
pub fn shap_values(model: &TrainedModel, rows: &Matrix, background: &Matrix) -> Result<ShapMatrix> {
    let d = model.n_features();
    let k = model.n_classes;
    for m in [rows, background] {
        if m.n_cols() != d {
            return Err(Error::WidthMismatch {
                expected: d,
                found: m.n_cols(),
            });
        }
    }
    check_finite(rows)?;
    check_finite(background)?;

    let background_mean: Vec<f64> = if background.n_rows() == 0 {
        vec![f64::NAN; k]
    } else {
        let p = model.predict(background)?;
        (0..k)
            .map(|c| p.scores.column(c).iter().sum::<f64>() / background.n_rows() as f64)
            .collect()
    };

    // per row: phi laid out as features × classes
    let (base, per_row): (Vec<f64>, Vec<Vec<f64>>) = match &model.params {
        ModelParams::Gbm(b) | ModelParams::Xgb(b) => {
            let mut base = b.base_scores.clone();
            for round in &b.rounds {
                for (c, t) in round.iter().enumerate() {
                    base[c] += tree_expectation(t)[0];
                }
            }
            let per_row = (0..rows.n_rows())
                .into_par_iter()
                .map(|i| {
                    let mut phi = vec![0.0; d * k];
                    let mut one = vec![0.0; d];
                    for round in &b.rounds {
                        for (c, t) in round.iter().enumerate() {
                            one.fill(0.0);
                            tree_shap(t, rows.row(i), 1.0, &mut one);
                            for j in 0..d {
                                phi[j * k + c] += one[j];
                            }
                        }
                    }
                    phi
                })
                .collect();
            (base, per_row)
        }
        ModelParams::Rf(f) => {
            let scale = 1.0 / f.trees.len() as f64;
            let mut base = vec![0.0; k];
            for t in &f.trees {
                for (b, e) in base.iter_mut().zip(tree_expectation(t)) {
                    *b += scale * e;
                }
            }
            let per_row = (0..rows.n_rows())
                .into_par_iter()
                .map(|i| {
                    let mut phi = vec![0.0; d * k];
                    for t in &f.trees {
                        tree_shap(t, rows.row(i), scale, &mut phi);
                    }
                    phi
                })
                .collect();
            (base, per_row)
        }
        ModelParams::Lda(m) => {
            let z: Vec<Vec<f64>> = background.rows().map(|r| m.transform_row(r)).collect();
            let mean = column_means(&z, m.used.len());
            let base = (0..k)
                .map(|c| m.intercept[c] + m.coef[c].iter().zip(&mean).map(|(w, v)| w * v).sum::<f64>())
                .collect();
            let per_row = rows
                .rows()
                .map(|r| {
                    let zr = m.transform_row(r);
                    let mut phi = vec![0.0; d * k];
                    for (u, &j) in m.used.iter().enumerate() {
                        for c in 0..k {
                            phi[j * k + c] = m.coef[c][u] * (zr[u] - mean[u]);
                        }
                    }
                    phi
                })
                .collect();
            (base, per_row)
        }
        ModelParams::LinearSvm(m) => {
            let z: Vec<Vec<f64>> = background.rows().map(|r| m.transform_row(r)).collect();
            let mean = column_means(&z, d);
            let base = (0..k)
                .map(|c| m.bias[c] + m.weights[c].iter().zip(&mean).map(|(w, v)| w * v).sum::<f64>())
                .collect();
            let per_row = rows
                .rows()
                .map(|r| {
                    let zr = m.transform_row(r);
                    let mut phi = vec![0.0; d * k];
                    for j in 0..d {
                        for c in 0..k {
                            phi[j * k + c] = m.weights[c][j] * (zr[j] - mean[j]);
                        }
                    }
                    phi
                })
                .collect();
            (base, per_row)
        }
    };

    let n = rows.n_rows();
    let classes = (0..k)
        .map(|c| {
            let mut data = Vec::with_capacity(n * d);
            for phi in &per_row {
                data.extend((0..d).map(|j| phi[j * k + c]));
            }
            ShapClass {
                base: base[c],
                background_mean: background_mean[c],
                values: Matrix::new(n, d, data).expect("shape is n × d"),
            }
        })
        .collect();
    Ok(ShapMatrix {
        feature_names: model.feature_names.clone(),
        classes,
    })
}

fn column_means(z: &[Vec<f64>], d: usize) -> Vec<f64> {
    let mut mean = vec![0.0; d];
    if z.is_empty() {
        return mean;
    }
    for r in z {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= z.len() as f64);
    mean
}

/// One class's attributions: a column per feature plus `base`.
pub fn write_shap_csv<W: Write>(w: W, shap: &ShapMatrix, class: usize) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = shap.feature_names.clone();
    header.push("base".into());
    out.write_record(&header)?;
    let c = &shap.classes[class];
    for r in c.values.rows() {
        let mut rec: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        rec.push(c.base.to_string());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
