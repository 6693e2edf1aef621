use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::matrix::Matrix;

/// Number of columns produced by [`nonlinear_classes`].
pub const TABULAR_FEATURES: usize = 8;

/// Six ordered classes cut from a nonlinear score of eight uniform features.
///
/// The score adds a linear trend, a sine and a kink in three columns, so
/// axis-aligned trees can follow it while linear boundaries only roughly can.
/// The other five columns are pure noise. Cut points sit at the score
/// quantiles given by `mix`, so class shares follow it.
pub fn nonlinear_classes(n: usize, mix: &[f64; 6], seed: u64) -> (Matrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.03).expect("valid std-dev");
    let mut data = Vec::with_capacity(n * TABULAR_FEATURES);
    let mut score = Vec::with_capacity(n);
    for _ in 0..n {
        let x: [f64; TABULAR_FEATURES] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let s = 1.0 * x[0] + 0.8 * (3.0 * x[1]).sin() + 0.6 * (x[2].abs() - 0.5) + noise.sample(&mut rng);
        data.extend_from_slice(&x);
        score.push(s);
    }
    let mut sorted = score.clone();
    sorted.sort_by(f64::total_cmp);
    let total: f64 = mix.iter().sum();
    let mut cuts = Vec::with_capacity(5);
    let mut acc = 0.0;
    for w in &mix[..5] {
        acc += w / total;
        let k = ((acc * n as f64) as usize).min(n.saturating_sub(1));
        cuts.push(sorted[k]);
    }
    let labels = score.iter().map(|s| cuts.iter().filter(|c| s >= *c).count()).collect();
    (Matrix::new(n, TABULAR_FEATURES, data).expect("sized above"), labels)
}
