//! One-vs-rest linear soft-margin classifiers.
//!
//! Each binary problem minimises `½‖w‖² + C Σ max(0, 1 − y_i (wᵀz_i + b))`
//! on standardised rows by full-batch subgradient descent with step
//! `η₀ / √t`. The returned weights are the best of the current and averaged
//! iterates seen over all epochs, so the recorded objective never rises.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::standardize::Standardizer;
use super::{class_counts, ABSENT_CLASS_SCORE};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmParams {
    pub c: f64,
    pub epochs: usize,
    pub step: f64,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            epochs: 300,
            step: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub standardizer: Standardizer,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    /// Per class, objective of the kept iterate after each epoch.
    pub objective_trace: Vec<Vec<f64>>,
}

/// `½‖w‖² + C Σ hinge` on standardised rows `z` with ±1 targets.
pub fn primal_objective(z: &[Vec<f64>], t: &[f64], w: &[f64], b: f64, c: f64) -> f64 {
    0.5 * w.iter().map(|v| v * v).sum::<f64>() + c * hinge_sum(z, t, w, b)
}

pub fn hinge_sum(z: &[Vec<f64>], t: &[f64], w: &[f64], b: f64) -> f64 {
    z.iter()
        .zip(t)
        .map(|(r, &y)| (1.0 - y * (dot(w, r) + b)).max(0.0))
        .sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn fit_binary(z: &[Vec<f64>], t: &[f64], params: &SvmParams) -> (Vec<f64>, f64, Vec<f64>) {
    let d = z.first().map_or(0, Vec::len);
    let n = z.len() as f64;
    // work on the objective divided by C·N so step sizes do not depend on C or N
    let reg = 1.0 / (params.c * n);
    let (mut w, mut b) = (vec![0.0; d], 0.0);
    let (mut avg_w, mut avg_b) = (vec![0.0; d], 0.0);
    let mut best = (w.clone(), b, primal_objective(z, t, &w, b, params.c));
    let mut trace = Vec::with_capacity(params.epochs);
    let mut gw = vec![0.0; d];
    for epoch in 1..=params.epochs {
        for (g, v) in gw.iter_mut().zip(&w) {
            *g = reg * v;
        }
        let mut gb = 0.0;
        for (r, &y) in z.iter().zip(t) {
            if y * (dot(&w, r) + b) < 1.0 {
                for (g, v) in gw.iter_mut().zip(r) {
                    *g -= y * v / n;
                }
                gb -= y / n;
            }
        }
        let eta = params.step / (epoch as f64).sqrt();
        for (v, g) in w.iter_mut().zip(&gw) {
            *v -= eta * g;
        }
        b -= eta * gb;

        let k = epoch as f64;
        for (a, v) in avg_w.iter_mut().zip(&w) {
            *a += (v - *a) / k;
        }
        avg_b += (b - avg_b) / k;
        for (cw, cb) in [(&w, b), (&avg_w, avg_b)] {
            let obj = primal_objective(z, t, cw, cb, params.c);
            if obj < best.2 {
                best = (cw.clone(), cb, obj);
            }
        }
        trace.push(best.2);
    }
    (best.0, best.1, trace)
}

impl SvmModel {
    pub fn fit(x: &Matrix, labels: &[usize], n_classes: usize, params: &SvmParams) -> Result<Self> {
        let counts = class_counts(labels, n_classes);
        let present = counts.iter().filter(|&&c| c > 0).count();
        if present < 2 {
            return Err(Error::TooFewClasses(present));
        }
        if !(params.c > 0.0) || params.epochs == 0 {
            return Err(Error::InvalidArgument("SVM needs C > 0 and at least one epoch".into()));
        }
        let standardizer = Standardizer::fit(x);
        let z: Vec<Vec<f64>> = x
            .rows()
            .map(|r| {
                let mut o = vec![0.0; r.len()];
                standardizer.apply_row(r, &mut o);
                o
            })
            .collect();
        let fitted: Vec<(Vec<f64>, f64, Vec<f64>)> = (0..n_classes)
            .into_par_iter()
            .map(|k| {
                if counts[k] == 0 {
                    return (vec![0.0; x.n_cols()], ABSENT_CLASS_SCORE, Vec::new());
                }
                let t: Vec<f64> = labels.iter().map(|&y| if y == k { 1.0 } else { -1.0 }).collect();
                fit_binary(&z, &t, params)
            })
            .collect();
        let mut model = SvmModel {
            standardizer,
            weights: Vec::new(),
            bias: Vec::new(),
            objective_trace: Vec::new(),
        };
        for (w, b, tr) in fitted {
            model.weights.push(w);
            model.bias.push(b);
            model.objective_trace.push(tr);
        }
        Ok(model)
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; row.len()];
        self.standardizer.apply_row(row, &mut z);
        z
    }

    pub fn scores_row(&self, row: &[f64], out: &mut [f64]) {
        let z = self.transform_row(row);
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.bias[k] + dot(&self.weights[k], &z);
        }
    }
}
