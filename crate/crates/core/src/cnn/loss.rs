use crate::scalar::Scalar;

/// Softmax probabilities (max-subtracted) and the argmax label; ties go to
/// the lowest index.
pub fn softmax_predict<T: Scalar>(logits: &[T]) -> (Vec<T>, usize) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    let probs: Vec<T> = exps.into_iter().map(|e| e / total).collect();
    (probs.clone(), argmax(&probs))
}

pub(crate) fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

const PROB_FLOOR: f64 = 1e-12;

/// Negative log-likelihood of `label` and its gradient with respect to the
/// logits that produced `probs`.
pub fn cross_entropy<T: Scalar>(probs: &[T], label: usize) -> (T, Vec<T>) {
    let p = probs[label].max(T::cast(PROB_FLOOR));
    let grad = probs
        .iter()
        .enumerate()
        .map(|(i, &q)| if i == label { q - T::one() } else { q })
        .collect();
    (-p.ln(), grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_examples() {
        let (p, label) = softmax_predict(&[0.0f64, 0.0]);
        assert_eq!(p, vec![0.5, 0.5]);
        assert_eq!(label, 0);

        let (p, label) = softmax_predict(&[1.0f64, 3.0]);
        let e2 = 2f64.exp();
        assert!((p[0] - 1.0 / (1.0 + e2)).abs() < 1e-15);
        assert!((p[1] - e2 / (1.0 + e2)).abs() < 1e-15);
        assert!((p[0] - 0.1192).abs() < 1e-4 && (p[1] - 0.8808).abs() < 1e-4);
        assert_eq!(label, 1);

        let (q, _) = softmax_predict(&[1001.0f64, 1003.0]);
        assert!((p[0] - q[0]).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_examples() {
        let (loss, grad) = cross_entropy(&[0.0f64, 1.0], 1);
        assert_eq!(loss, 0.0);
        assert_eq!(grad, vec![0.0, 0.0]);
        let (loss, _) = cross_entropy(&[0.5f64, 0.5], 0);
        assert!((loss - 2f64.ln()).abs() < 1e-15);
        let (loss, _) = cross_entropy(&[1.0f64, 0.0], 1);
        assert!((loss - 1e12f64.ln()).abs() < 1e-9);
    }
}
