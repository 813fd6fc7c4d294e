use super::{NnError, Real, Tensor};

pub fn relu<T: Real>(t: &Tensor<T>) -> Tensor<T> {
    let mut out = t.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
    out
}

/// Passes the upstream gradient where the forward input was strictly
/// positive; zero input blocks it.
pub fn relu_backward<T: Real>(input: &Tensor<T>, grad_output: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    if input.shape() != grad_output.shape() {
        return Err(NnError::Shape(format!(
            "relu gradient {:?} does not match input {:?}",
            grad_output.shape(),
            input.shape()
        )));
    }
    let mut grad = grad_output.clone();
    for (g, &x) in grad.data_mut().iter_mut().zip(input.data()) {
        if x <= T::zero() {
            *g = T::zero();
        }
    }
    Ok(grad)
}
