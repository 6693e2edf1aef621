//! Multiclass softmax log-loss and its per-row derivatives.

/// Numerically stable softmax.
pub fn softmax(scores: &[f64], out: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, s) in out.iter_mut().zip(scores) {
        *o = (s - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// `-log p_label` for one row of margins.
pub fn row_log_loss(scores: &[f64], label: usize) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    lse - scores[label]
}

/// Gradient `p_k - [k = label]` and Hessian diagonal `p_k (1 - p_k)` of the
/// row log-loss with respect to each margin.
pub fn grad_hess(scores: &[f64], label: usize, grad: &mut [f64], hess: &mut [f64]) {
    softmax(scores, grad);
    for (k, (g, h)) in grad.iter_mut().zip(hess.iter_mut()).enumerate() {
        let p = *g;
        *h = p * (1.0 - p);
        if k == label {
            *g = p - 1.0;
        }
    }
}

/// Mean log-loss over rows of a row-major score buffer.
pub fn mean_log_loss(scores: &[f64], n_classes: usize, labels: &[usize]) -> f64 {
    let total: f64 = scores
        .chunks_exact(n_classes)
        .zip(labels)
        .map(|(s, &y)| row_log_loss(s, y))
        .sum();
    total / labels.len().max(1) as f64
}
