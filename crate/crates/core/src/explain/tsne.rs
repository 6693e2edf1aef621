//! Exact t-SNE.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iters: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
}

impl Default for TsneParams {
    fn default() -> Self {
        TsneParams {
            perplexity: 30.0,
            iters: 1000,
            learning_rate: 200.0,
            seed: 0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding2D {
    /// N × 2.
    pub coords: Matrix,
    /// Perplexity actually used (clamped for small inputs).
    pub perplexity: f64,
    pub kl_initial: f64,
    pub kl_final: f64,
}

const ENTROPY_TOL: f64 = 1e-5;
const P_FLOOR: f64 = 1e-12;

fn squared_distances(x: &Matrix) -> Vec<f64> {
    let n = x.n_rows();
    let mut d = vec![0.0; n * n];
    d.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let a = x.row(i);
        for (j, v) in row.iter_mut().enumerate() {
            *v = a.iter().zip(x.row(j)).map(|(p, q)| (p - q) * (p - q)).sum();
        }
    });
    d
}

/// Conditional affinities of one row, bisecting the precision until the
/// entropy matches `ln(perplexity)`.
fn row_affinities(dist: &[f64], i: usize, perplexity: f64, out: &mut [f64]) {
    let target = perplexity.ln();
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut beta = 1.0;
    // shift by the smallest off-diagonal distance for numerical range
    let dmin = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, d)| *d)
        .fold(f64::INFINITY, f64::min);
    for _ in 0..200 {
        let mut sum = 0.0;
        let mut weighted = 0.0;
        for (j, (o, d)) in out.iter_mut().zip(dist).enumerate() {
            if j == i {
                *o = 0.0;
                continue;
            }
            *o = (-(d - dmin) * beta).exp();
            sum += *o;
            weighted += (d - dmin) * *o;
        }
        let entropy = sum.ln() + beta * weighted / sum;
        for o in out.iter_mut() {
            *o /= sum;
        }
        let diff = entropy - target;
        if diff.abs() < ENTROPY_TOL {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
    }
}

fn joint_affinities(x: &Matrix, perplexity: f64) -> Vec<f64> {
    let n = x.n_rows();
    let dist = squared_distances(x);
    let mut cond = vec![0.0; n * n];
    cond.par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| row_affinities(&dist[i * n..(i + 1) * n], i, perplexity, row));
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(P_FLOOR);
            }
        }
    }
    p
}

#[inline]
fn kernel(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    1.0 / (1.0 + dx * dx + dy * dy)
}

/// Sum of Student-t kernel values over all ordered pairs. Recomputed rather
/// than stored: an n² buffer per iteration costs more than the arithmetic.
fn kernel_total(y: &[[f64; 2]]) -> f64 {
    let rows: Vec<f64> = (0..y.len())
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for (j, b) in y.iter().enumerate() {
                if i != j {
                    s += kernel(y[i], *b);
                }
            }
            s
        })
        .collect();
    rows.iter().sum()
}

fn kl_divergence(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let total = kernel_total(y);
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for j in 0..n {
                if i != j {
                    let pij = p[i * n + j];
                    let q = (kernel(y[i], y[j]) / total).max(P_FLOOR);
                    s += pij * (pij / q).ln();
                }
            }
            s
        })
        .collect();
    rows.iter().sum()
}

/// Seeded jitter for exact duplicate rows so every row has a neighbourhood.
fn jitter_duplicates(x: &Matrix, rng: &mut ChaCha8Rng) -> Matrix {
    let n = x.n_rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        x.row(a)
            .iter()
            .zip(x.row(b))
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let dup: Vec<usize> = order.windows(2).filter(|w| x.row(w[0]) == x.row(w[1])).map(|w| w[1]).collect();
    if dup.is_empty() {
        return x.clone();
    }
    let scale = x.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let noise = Normal::new(0.0, 1e-6 * scale).expect("positive std");
    let mut out = x.clone();
    for i in dup {
        for v in out.row_mut(i) {
            *v += noise.sample(rng);
        }
    }
    out
}

pub fn tsne_embed(x: &Matrix, params: &TsneParams) -> Result<Embedding2D> {
    let n = x.n_rows();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("t-SNE needs at least 3 rows, got {n}")));
    }
    if let Some(i) = (0..n).find(|&i| x.row(i).iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite(i));
    }
    let mut perplexity = params.perplexity;
    if (n as f64) < 3.0 * perplexity {
        perplexity = ((n - 1) as f64 / 3.0).max(1.0);
        log::warn!(
            "t-SNE: {n} rows is small for perplexity {}; using {perplexity}",
            params.perplexity
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let x = jitter_duplicates(x, &mut rng);
    let p = joint_affinities(&x, perplexity);

    let init = Normal::new(0.0, 1e-4).expect("positive std");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [init.sample(&mut rng), init.sample(&mut rng)]).collect();
    let kl_initial = kl_divergence(&p, &y);

    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    for it in 0..params.iters {
        let exaggeration = if it < params.exaggeration_iters { params.early_exaggeration } else { 1.0 };
        let momentum = if it < params.exaggeration_iters { 0.5 } else { 0.8 };
        let total = kernel_total(&y);
        let grad: Vec<[f64; 2]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut g = [0.0; 2];
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let w = kernel(y[i], y[j]);
                    let m = (exaggeration * p[i * n + j] - w / total) * w;
                    g[0] += m * (y[i][0] - y[j][0]);
                    g[1] += m * (y[i][1] - y[j][1]);
                }
                [4.0 * g[0], 4.0 * g[1]]
            })
            .collect();
        for i in 0..n {
            for a in 0..2 {
                let same_sign = (grad[i][a] > 0.0) == (update[i][a] > 0.0);
                gains[i][a] = if same_sign { gains[i][a] * 0.8 } else { gains[i][a] + 0.2 };
                gains[i][a] = gains[i][a].max(0.01);
                update[i][a] = momentum * update[i][a] - params.learning_rate * gains[i][a] * grad[i][a];
                y[i][a] += update[i][a];
            }
        }
        let mean = [
            y.iter().map(|v| v[0]).sum::<f64>() / n as f64,
            y.iter().map(|v| v[1]).sum::<f64>() / n as f64,
        ];
        for v in &mut y {
            v[0] -= mean[0];
            v[1] -= mean[1];
        }
    }
    let kl_final = kl_divergence(&p, &y);
    let coords = Matrix::new(n, 2, y.iter().flat_map(|v| *v).collect())?;
    Ok(Embedding2D {
        coords,
        perplexity,
        kl_initial,
        kl_final,
    })
}

/// `x,y` plus one column per entry of `extra_names`.
pub fn write_embedding_csv<W: Write>(w: W, emb: &Embedding2D, extra_names: &[String], extra: &Matrix) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["x".to_string(), "y".to_string()];
    header.extend(extra_names.iter().cloned());
    out.write_record(&header)?;
    for i in 0..emb.coords.n_rows() {
        let mut rec: Vec<String> = emb.coords.row(i).iter().map(|v| v.to_string()).collect();
        if extra.n_rows() > i {
            rec.extend(extra.row(i).iter().map(|v| v.to_string()));
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn two_clusters(seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for i in 0..100 {
            let shift = if i < 50 { 0.0 } else { 20.0 };
            let r: Vec<f64> = (0..10)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z + shift
                })
                .collect();
            rows.push(r);
        }
        Matrix::from_rows(&rows).unwrap()
    }

    fn small() -> TsneParams {
        TsneParams {
            perplexity: 10.0,
            iters: 300,
            exaggeration_iters: 100,
            seed: 4,
            ..TsneParams::default()
        }
    }

    #[test]
    fn perplexity_is_matched() {
        let x = two_clusters(1);
        let dist = squared_distances(&x);
        let mut row = vec![0.0; 100];
        row_affinities(&dist[0..100], 0, 10.0, &mut row);
        let h: f64 = -row.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>();
        assert!((h - 10f64.ln()).abs() < 1e-4);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clusters_separate_and_kl_falls() {
        let x = two_clusters(2);
        let e = tsne_embed(&x, &small()).unwrap();
        assert!(e.kl_final < e.kl_initial);
        let c = &e.coords;
        let centroid = |r: std::ops::Range<usize>| {
            let k = r.len() as f64;
            let (a, b) = r.clone().fold((0.0, 0.0), |s, i| (s.0 + c.get(i, 0), s.1 + c.get(i, 1)));
            [a / k, b / k]
        };
        let (ca, cb) = (centroid(0..50), centroid(50..100));
        let between = ((ca[0] - cb[0]).powi(2) + (ca[1] - cb[1]).powi(2)).sqrt();
        let within: f64 = (0..100)
            .map(|i| {
                let m = if i < 50 { ca } else { cb };
                ((c.get(i, 0) - m[0]).powi(2) + (c.get(i, 1) - m[1]).powi(2)).sqrt()
            })
            .sum::<f64>()
            / 100.0;
        assert!(between >= 3.0 * within, "{between} vs {within}");
    }

    #[test]
    fn seeded_runs_are_identical() {
        let x = two_clusters(3);
        let a = tsne_embed(&x, &small()).unwrap();
        let b = tsne_embed(&x, &small()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicates_and_tiny_inputs() {
        let x = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [5.0, 5.0]]).unwrap();
        let e = tsne_embed(&x, &small()).unwrap();
        assert!(e.coords.as_slice().iter().all(|v| v.is_finite()));
        assert!(e.kl_final >= 0.0);
        assert!(tsne_embed(&Matrix::zeros(2, 3), &small()).is_err());
    }
}
