//! Polynomial fits of attribution against feature value.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DEGREE: usize = 5;
pub const CURVE_POINTS: usize = 200;

/// A higher degree must beat the best lower one by more than this in adjusted R².
pub const SELECTION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeFit {
    pub degree: usize,
    pub r2: f64,
    pub adj_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceCurve {
    pub feature: String,
    pub class: usize,
    pub degree: usize,
    /// Ascending powers of the raw feature value.
    pub coefficients: Vec<f64>,
    /// Ascending powers of `t = (x − center) / half_range`; better conditioned.
    pub scaled_coefficients: Vec<f64>,
    pub center: f64,
    pub half_range: f64,
    pub r2: f64,
    pub adj_r2: f64,
    pub candidates: Vec<DegreeFit>,
    /// `(x, fitted)` over the observed range.
    pub curve: Vec<(f64, f64)>,
}

fn horner(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * t + v)
}

/// Re-expands a polynomial in `t = (x − c)/h` into powers of `x`.
fn to_raw_basis(scaled: &[f64], center: f64, h: f64) -> Vec<f64> {
    let mut raw = vec![0.0; scaled.len()];
    for (k, a) in scaled.iter().enumerate() {
        // a · ((x − c)/h)^k = a/h^k Σ_m C(k,m) x^m (−c)^(k−m)
        let f = a / h.powi(k as i32);
        let mut binom = 1.0;
        for m in 0..=k {
            raw[m] += f * binom * (-center).powi((k - m) as i32);
            binom = binom * (k - m) as f64 / (m + 1) as f64;
        }
    }
    raw
}

struct Fit {
    coef: Vec<f64>,
    sse: f64,
}

/// Weighted least squares by Householder QR; `None` when rank deficient.
fn fit_degree(t: &[f64], y: &[f64], w: &[f64], degree: usize) -> Option<Fit> {
    let n = t.len();
    let p = degree + 1;
    let a = DMatrix::from_fn(n, p, |i, j| w[i].sqrt() * t[i].powi(j as i32));
    let b = DVector::from_iterator(n, y.iter().zip(w).map(|(v, wi)| wi.sqrt() * v));
    let qr = a.qr();
    let r = qr.r();
    let rmax = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..p).any(|i| r[(i, i)].abs() <= 1e-12 * rmax.max(f64::MIN_POSITIVE)) {
        return None;
    }
    let qtb = qr.q().transpose() * &b;
    let coef = r.solve_upper_triangular(&qtb)?;
    let coef: Vec<f64> = coef.iter().copied().collect();
    let sse = t
        .iter()
        .zip(y)
        .zip(w)
        .map(|((ti, yi), wi)| wi * (yi - horner(&coef, *ti)).powi(2))
        .sum();
    Some(Fit { coef, sse })
}

/// Fits degrees 1–5 and keeps the one with the best adjusted R². Degrees with
/// fewer than `degree + 2` points are skipped.
pub fn dependence_curve(
    feature: &str,
    class: usize,
    x: &[f64],
    y: &[f64],
    weights: Option<&[f64]>,
) -> Result<DependenceCurve> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if let Some(w) = weights {
        if w.len() != x.len() {
            return Err(Error::LengthMismatch(x.len(), w.len()));
        }
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
        }
    }
    if let Some(i) = x.iter().zip(y).position(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let n = x.len();
    let unit = vec![1.0; n];
    let w = weights.unwrap_or(&unit);
    let wsum: f64 = w.iter().sum();
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let center = 0.5 * (lo + hi);
    let half_range = 0.5 * (hi - lo);
    if !(half_range > 0.0) || !(wsum > 0.0) {
        return Err(Error::InvalidArgument(format!("feature `{feature}` has no spread to fit against")));
    }
    let t: Vec<f64> = x.iter().map(|v| (v - center) / half_range).collect();
    let ymean = y.iter().zip(w).map(|(v, wi)| v * wi).sum::<f64>() / wsum;
    let sst: f64 = y.iter().zip(w).map(|(v, wi)| wi * (v - ymean).powi(2)).sum();

    let mut candidates = Vec::new();
    let mut best: Option<(DegreeFit, Vec<f64>)> = None;
    for degree in 1..=MAX_DEGREE {
        if n < degree + 2 {
            continue;
        }
        let Some(fit) = fit_degree(&t, y, w, degree) else {
            continue;
        };
        // a flat response is fit perfectly by every degree
        let r2 = if sst > 0.0 { 1.0 - fit.sse / sst } else { 1.0 };
        let adj_r2 = 1.0 - (1.0 - r2) * (n - 1) as f64 / (n - degree - 1) as f64;
        let cand = DegreeFit { degree, r2, adj_r2 };
        candidates.push(cand.clone());
        if best.as_ref().is_none_or(|(b, _)| adj_r2 > b.adj_r2 + SELECTION_TOLERANCE) {
            best = Some((cand, fit.coef));
        }
    }
    let Some((chosen, scaled)) = best else {
        return Err(Error::InvalidArgument(format!(
            "too few points ({n}) to fit any degree for `{feature}`"
        )));
    };
    let curve = (0..CURVE_POINTS)
        .map(|i| {
            let xv = lo + (hi - lo) * i as f64 / (CURVE_POINTS - 1) as f64;
            (xv, horner(&scaled, (xv - center) / half_range))
        })
        .collect();
    Ok(DependenceCurve {
        feature: feature.to_string(),
        class,
        degree: chosen.degree,
        coefficients: to_raw_basis(&scaled, center, half_range),
        scaled_coefficients: scaled,
        center,
        half_range,
        r2: chosen.r2,
        adj_r2: chosen.adj_r2,
        candidates,
        curve,
    })
}

/// Long-format samples: `feature,class,x,y`.
pub fn write_dependence_csv<W: Write>(w: W, curves: &[DependenceCurve]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["feature", "class", "x", "y"])?;
    for c in curves {
        for (x, y) in &c.curve {
            out.write_record([c.feature.clone(), c.class.to_string(), x.to_string(), y.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.5 - 3.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let c = dependence_curve("f", 0, &x, &y, None).unwrap();
        assert_eq!(c.degree, 1);
        assert!((c.coefficients[0] - 1.0).abs() < 1e-9);
        assert!((c.coefficients[1] - 2.0).abs() < 1e-9);
        assert_eq!(c.curve.len(), CURVE_POINTS);
    }

    #[test]
    fn noisy_cubic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let noise = Normal::new(0.0, 1e-3).unwrap();
        let x: Vec<f64> = (0..100).map(|i| i as f64 / 25.0 - 2.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v * v - v + 0.5 + noise.sample(&mut rng)).collect();
        let c = dependence_curve("f", 2, &x, &y, None).unwrap();
        assert_eq!(c.degree, 3);
        assert!((c.coefficients[3] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn flat_response() {
        let x: Vec<f64> = (0..10).map(|i| 2020.0 + i as f64).collect();
        let c = dependence_curve("year", 0, &x, &[0.7; 10], None).unwrap();
        assert_eq!(c.degree, 1);
        assert!(c.scaled_coefficients[1].abs() < 1e-9);
        assert!(c.coefficients[1].abs() < 1e-9);
    }

    #[test]
    fn few_points_skip_degrees() {
        let c = dependence_curve("f", 0, &[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 4.0, 9.0], None).unwrap();
        assert!(c.candidates.iter().all(|d| d.degree <= 2));
        assert_eq!(c.degree, 2);
        assert!(dependence_curve("f", 0, &[0.0, 1.0], &[0.0, 1.0], None).is_err());
        assert!(dependence_curve("f", 0, &[1.0; 8], &[0.0; 8], None).is_err());
    }

    #[test]
    fn raw_basis_matches_scaled() {
        let scaled = [0.3, -1.2, 0.5, 2.0];
        let raw = to_raw_basis(&scaled, 4.0, 2.5);
        for x in [-1.0, 0.0, 3.3, 7.0] {
            assert!((horner(&raw, x) - horner(&scaled, (x - 4.0) / 2.5)).abs() < 1e-9);
        }
    }
}
