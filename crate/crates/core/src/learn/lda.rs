//! Linear discriminant analysis with a shared, ridge-stabilised covariance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::standardize::Standardizer;
use super::{class_counts, ABSENT_CLASS_SCORE};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaParams {
    /// Ridge added to the pooled covariance, as a multiple of its mean diagonal.
    pub ridge_scale: f64,
}

impl Default for LdaParams {
    fn default() -> Self {
        LdaParams { ridge_scale: 1e-6 }
    }
}

/// Discriminants `δ_k(x) = w_kᵀ z + c_k` on standardised, non-constant columns `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub standardizer: Standardizer,
    /// Columns used (constant columns are dropped).
    pub used: Vec<usize>,
    pub priors: Vec<f64>,
    /// Class means in standardised space; empty for absent classes.
    pub class_means: Vec<Vec<f64>>,
    pub ridge: f64,
    pub coef: Vec<Vec<f64>>,
    pub intercept: Vec<f64>,
}

impl LdaModel {
    pub fn fit(x: &Matrix, labels: &[usize], n_classes: usize, params: &LdaParams) -> Result<Self> {
        let counts = class_counts(labels, n_classes);
        let present = counts.iter().filter(|&&c| c > 0).count();
        if present < 2 {
            return Err(Error::TooFewClasses(present));
        }
        let standardizer = Standardizer::fit(x);
        for &j in &standardizer.constant {
            log::warn!("LDA: dropping constant feature column {j}");
        }
        let used: Vec<usize> = (0..x.n_cols()).filter(|j| !standardizer.constant.contains(j)).collect();
        if used.is_empty() {
            return Err(Error::InvalidArgument("every feature is constant".into()));
        }
        let d = used.len();
        let n = labels.len();

        let mut z = vec![0.0; x.n_cols()];
        let mut sums = vec![vec![0.0; d]; n_classes];
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        for (r, &y) in x.rows().zip(labels) {
            standardizer.apply_row(r, &mut z);
            let zr: Vec<f64> = used.iter().map(|&j| z[j]).collect();
            for (s, v) in sums[y].iter_mut().zip(&zr) {
                *s += v;
            }
            rows.push(zr);
        }
        let class_means: Vec<Vec<f64>> = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| if c > 0 { s.iter().map(|v| v / c as f64).collect() } else { Vec::new() })
            .collect();

        let mut cov = DMatrix::<f64>::zeros(d, d);
        for (zr, &y) in rows.iter().zip(labels) {
            let dev = DVector::from_iterator(d, zr.iter().zip(&class_means[y]).map(|(a, m)| a - m));
            cov.syger(1.0, &dev, &dev, 1.0);
        }
        let dof = if n > present { n - present } else { n };
        cov /= dof as f64;
        cov.fill_upper_triangle_with_lower_triangle();

        let trace = cov.trace();
        let mut ridge = if trace > 0.0 {
            params.ridge_scale * trace / d as f64
        } else {
            params.ridge_scale
        };
        let chol = loop {
            let mut c = cov.clone();
            for i in 0..d {
                c[(i, i)] += ridge;
            }
            if let Some(ch) = c.cholesky() {
                break ch;
            }
            ridge *= 10.0;
            if !ridge.is_finite() {
                return Err(Error::InvalidArgument("pooled covariance cannot be stabilised".into()));
            }
        };

        let priors: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        let mut coef = Vec::with_capacity(n_classes);
        let mut intercept = Vec::with_capacity(n_classes);
        for k in 0..n_classes {
            if counts[k] == 0 {
                coef.push(vec![0.0; d]);
                intercept.push(ABSENT_CLASS_SCORE);
                continue;
            }
            let mu = DVector::from_column_slice(&class_means[k]);
            let w = chol.solve(&mu);
            intercept.push(-0.5 * mu.dot(&w) + priors[k].ln());
            coef.push(w.iter().copied().collect());
        }
        Ok(LdaModel {
            standardizer,
            used,
            priors,
            class_means,
            ridge,
            coef,
            intercept,
        })
    }

    /// Standardised, reduced view of a raw row.
    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        self.used
            .iter()
            .map(|&j| (row[j] - self.standardizer.mean[j]) / self.standardizer.scale[j])
            .collect()
    }

    pub fn scores_row(&self, row: &[f64], out: &mut [f64]) {
        let z = self.transform_row(row);
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.intercept[k] + self.coef[k].iter().zip(&z).map(|(w, v)| w * v).sum::<f64>();
        }
    }
}
