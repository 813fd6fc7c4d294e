use super::Real;

#[derive(Clone, Debug)]
pub struct SoftmaxLoss<T = f32> {
    pub loss: T,
    pub probs: Vec<T>,
    /// dloss/dlogits = probs − onehot(label).
    pub grad: Vec<T>,
}

/// Max-shifted softmax.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut probs: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: T = probs.iter().copied().sum();
    probs.iter_mut().for_each(|p| *p = *p / total);
    probs
}

pub fn softmax_cross_entropy<T: Real>(logits: &[T], label: usize) -> SoftmaxLoss<T> {
    assert!(label < logits.len(), "label {label} out of range for {} classes", logits.len());
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let shifted: Vec<T> = logits.iter().map(|&l| l - max).collect();
    let log_total = shifted.iter().map(|&s| s.exp()).sum::<T>().ln();
    let probs: Vec<T> = shifted.iter().map(|&s| (s - log_total).exp()).collect();
    let loss = log_total - shifted[label];
    let mut grad = probs.clone();
    grad[label] -= T::one();
    SoftmaxLoss { loss, probs, grad }
}
