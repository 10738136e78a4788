use crate::neural::layers::softmax_rows;
use crate::neural::Tensor;

use super::TrainError;

pub const LOG_EPS: f64 = 1e-12;

/// Mean of `-ln(p_label + 1e-12)` over the rows of `logits` `[N, K]`, and
/// its gradient with respect to the logits, `(p - onehot) / N`.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor), TrainError> {
    let k = logits.shape[1];
    let n = labels.len();
    assert_eq!(logits.shape[0], n, "one label per row");
    let probs = softmax_rows(&logits.data, k);
    let mut grad = probs.clone();
    let mut loss = 0.0;
    for (s, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(TrainError::LabelOutOfRange { label: y, classes: k });
        }
        loss -= (probs[s * k + y] + LOG_EPS).ln();
        grad[s * k + y] -= 1.0;
    }
    let inv = 1.0 / n.max(1) as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok((loss * inv, Tensor { shape: logits.shape.clone(), data: grad }))
}

/// Loss of already normalized probabilities.
pub fn cross_entropy_probs(probs: &[f64], k: usize, labels: &[usize]) -> f64 {
    let n = labels.len().max(1) as f64;
    labels.iter().enumerate().map(|(s, &y)| -(probs[s * k + y] + LOG_EPS).ln()).sum::<f64>() / n
}
