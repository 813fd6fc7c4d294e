//! Central finite differences for checking analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// Gradients smaller than this on both sides are treated as equal; the
/// relative error of two values that are both numerically zero is noise.
const NEGLIGIBLE: f64 = 1e-7;

/// Uniform(-1, 1) tensor from a seed.
pub fn seeded_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// dL/dt by central differences, perturbing one element at a time.
pub fn numeric_grad(t: &Tensor<f64>, mut loss: impl FnMut(&Tensor<f64>) -> f64) -> Tensor<f64> {
    let mut probe = t.clone();
    let mut grad = Tensor::zeros(t.shape());
    for i in 0..t.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + STEP;
        let plus = loss(&probe);
        probe.data_mut()[i] = orig - STEP;
        let minus = loss(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (plus - minus) / (2.0 * STEP);
    }
    grad
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < NEGLIGIBLE {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Largest elementwise relative error between two gradient tensors.
pub fn max_relative_error(analytic: &Tensor<f64>, numeric: &Tensor<f64>) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

#[cfg(test)]
pub(crate) fn assert_grad_close(analytic: &Tensor<f64>, numeric: &Tensor<f64>) {
    let err = max_relative_error(analytic, numeric);
    assert!(
        err <= TOLERANCE,
        "max relative gradient error {err:e}\nanalytic {analytic:?}\nnumeric {numeric:?}"
    );
}
