/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of `softmax(logits)` against `label`, and its gradient
/// with respect to the logits.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    let loss = max + sum.ln() - logits[label];
    let mut p = softmax(logits);
    p[label] -= 1.0;
    (loss, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_k() {
        let (loss, grad) = softmax_cross_entropy(&[0.0; 10], 3);
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        assert!((grad.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn stable_for_large_logits() {
        let p = softmax(&[1000.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-12);
        let (loss, _) = softmax_cross_entropy(&[1000.0, 0.0], 1);
        assert!((loss - 1000.0).abs() < 1e-9);
    }
}
