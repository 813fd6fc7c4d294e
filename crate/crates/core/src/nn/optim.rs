use super::{NnError, Real, Tensor};

/// SGD with classical momentum: `v ← μ·v − lr·g`, `p ← p + v`.
#[derive(Clone, Debug)]
pub struct Sgd<T = f32> {
    pub learning_rate: T,
    pub momentum: T,
    velocity: Vec<Tensor<T>>,
}

impl<T: Real> Sgd<T> {
    pub fn new(learning_rate: T, momentum: T) -> Self {
        Self {
            learning_rate,
            momentum,
            velocity: Vec::new(),
        }
    }

    /// Applies one update. Nothing is modified if any gradient is
    /// non-finite or shapes disagree.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<(), NnError> {
        if params.len() != grads.len() {
            return Err(NnError::Shape(format!(
                "{} parameter tensors but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(NnError::Shape(format!(
                    "gradient {i} has shape {:?}, parameter has {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if !g.is_finite() {
                return Err(NnError::NonFiniteGradient(i));
            }
        }
        if self.velocity.len() != params.len() {
            self.velocity = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        }
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *vv = self.momentum * *vv - self.learning_rate * gv;
                *pv += *vv;
            }
        }
        Ok(())
    }
}
