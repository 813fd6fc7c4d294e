use super::{NnError, Real, Tensor};

/// Fully connected layer `y = Wᵀx + b` with `weights` stored D×M.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearParams<T = f32> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct LinearGrads<T = f32> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> LinearParams<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self, NnError> {
        let p = Self { weights, bias };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Tensor::zeros(&[inputs, outputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        match *self.weights.shape() {
            [_, m] if self.bias.shape() == [m] => Ok(()),
            _ => Err(NnError::Shape(format!(
                "linear weights must be D×M with M biases, got {:?} and {:?}",
                self.weights.shape(),
                self.bias.shape()
            ))),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[1]
    }
}

/// Accepts a single vector (D) or a batch (N×D, or any N×… that flattens to D per row).
fn rows<T: Real>(x: &Tensor<T>, p: &LinearParams<T>) -> Result<(usize, bool), NnError> {
    p.validate()?;
    let d = p.inputs();
    if x.rank() == 1 {
        if x.len() != d {
            return Err(NnError::Shape(format!("linear input has {} features, weights expect {d}", x.len())));
        }
        return Ok((1, true));
    }
    let n = x.shape()[0];
    if n == 0 || x.len() != n * d {
        return Err(NnError::Shape(format!(
            "linear input {:?} does not flatten to N×{d}",
            x.shape()
        )));
    }
    Ok((n, false))
}

pub fn linear_forward<T: Real>(x: &Tensor<T>, p: &LinearParams<T>) -> Result<Tensor<T>, NnError> {
    let (n, single) = rows(x, p)?;
    let m = p.outputs();
    let mut out = Vec::with_capacity(n * m);
    for _ in 0..n {
        out.extend_from_slice(p.bias.data());
    }
    T::gemm(n, p.inputs(), m, T::one(), x.data(), false, p.weights.data(), false, T::one(), &mut out);
    Tensor::new(if single { vec![m] } else { vec![n, m] }, out)
}

pub fn linear_backward<T: Real>(
    x: &Tensor<T>,
    p: &LinearParams<T>,
    grad_output: &Tensor<T>,
) -> Result<LinearGrads<T>, NnError> {
    let (n, _) = rows(x, p)?;
    let (d, m) = (p.inputs(), p.outputs());
    if grad_output.len() != n * m {
        return Err(NnError::Shape(format!(
            "linear gradient {:?} does not match {n}×{m}",
            grad_output.shape()
        )));
    }
    let mut grad_w = Tensor::zeros(&[d, m]);
    T::gemm(d, n, m, T::one(), x.data(), true, grad_output.data(), false, T::zero(), grad_w.data_mut());
    let mut grad_b = Tensor::zeros(&[m]);
    for row in grad_output.data().chunks_exact(m) {
        for (b, g) in grad_b.data_mut().iter_mut().zip(row) {
            *b += *g;
        }
    }
    let mut grad_in = Tensor::zeros(x.shape());
    T::gemm(n, m, d, T::one(), grad_output.data(), false, p.weights.data(), true, T::zero(), grad_in.data_mut());
    Ok(LinearGrads {
        input: grad_in,
        weights: grad_w,
        bias: grad_b,
    })
}
