use super::{NnError, Real, Tensor};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.9;

/// Per-channel batch normalization; the channel axis is the last one.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams<T = f32> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub epsilon: T,
    /// Weight of the old running statistic in the moving average.
    pub momentum: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchNormMode {
    Train,
    Infer,
}

#[derive(Clone, Debug)]
pub struct BatchStats<T = f32> {
    pub mean: Vec<T>,
    /// Biased (1/m) variance, the one used for normalization.
    pub var: Vec<T>,
    pub count: usize,
}

#[derive(Clone, Debug)]
pub struct BatchNormCache<T = f32> {
    normalized: Tensor<T>,
    inv_std: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct BatchNormOutput<T = f32> {
    pub output: Tensor<T>,
    /// Present in training mode only.
    pub cache: Option<BatchNormCache<T>>,
    pub stats: Option<BatchStats<T>>,
}

#[derive(Clone, Debug)]
pub struct BatchNormGrads<T = f32> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

impl<T: Real> BatchNormParams<T> {
    /// γ=1, β=0, running statistics (0, 1).
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], T::one()),
            epsilon: T::lit(DEFAULT_EPSILON),
            momentum: T::lit(DEFAULT_MOMENTUM),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let c = self.channels();
        let vectors = [&self.gamma, &self.beta, &self.running_mean, &self.running_var];
        if vectors.iter().any(|t| t.shape() != [c]) {
            return Err(NnError::Shape(
                "batch-norm vectors must all have one entry per channel".into(),
            ));
        }
        if self.running_var.data().iter().any(|&v| v < T::zero()) {
            return Err(NnError::Shape("batch-norm running variance is negative".into()));
        }
        Ok(())
    }

    /// Folds one batch into the running statistics. The running variance
    /// uses the unbiased batch estimate.
    pub fn update_running_stats(&mut self, stats: &BatchStats<T>) {
        let m = self.momentum;
        let keep = T::one() - m;
        let count = T::from_usize(stats.count).unwrap();
        let unbias = if stats.count > 1 {
            count / (count - T::one())
        } else {
            T::one()
        };
        for c in 0..self.channels() {
            let rm = &mut self.running_mean.data_mut()[c];
            *rm = m * *rm + keep * stats.mean[c];
            let rv = &mut self.running_var.data_mut()[c];
            *rv = m * *rv + keep * stats.var[c] * unbias;
        }
    }
}

fn channels_of<T: Real>(input: &Tensor<T>, params: &BatchNormParams<T>) -> Result<usize, NnError> {
    params.validate()?;
    let c = params.channels();
    if input.rank() < 2 || input.shape()[input.rank() - 1] != c {
        return Err(NnError::Shape(format!(
            "batch-norm input {:?} does not end in {} channels",
            input.shape(),
            c
        )));
    }
    Ok(c)
}

pub fn batchnorm_forward<T: Real>(
    input: &Tensor<T>,
    params: &BatchNormParams<T>,
    mode: BatchNormMode,
) -> Result<BatchNormOutput<T>, NnError> {
    let c = channels_of(input, params)?;
    let gamma = params.gamma.data();
    let beta = params.beta.data();
    match mode {
        BatchNormMode::Infer => {
            let scale: Vec<T> = (0..c)
                .map(|i| gamma[i] / (params.running_var.data()[i] + params.epsilon).sqrt())
                .collect();
            let mean = params.running_mean.data();
            let mut out = input.clone();
            for row in out.data_mut().chunks_exact_mut(c) {
                for (((x, &m), &s), &b) in row.iter_mut().zip(mean).zip(&scale).zip(beta) {
                    *x = (*x - m) * s + b;
                }
            }
            Ok(BatchNormOutput {
                output: out,
                cache: None,
                stats: None,
            })
        }
        BatchNormMode::Train => {
            let count = input.len() / c;
            if count < 2 {
                return Err(NnError::BatchTooSmall(count));
            }
            let inv_count = T::one() / T::from_usize(count).unwrap();
            let mut mean = vec![T::zero(); c];
            for row in input.data().chunks_exact(c) {
                for (m, &x) in mean.iter_mut().zip(row) {
                    *m += x;
                }
            }
            mean.iter_mut().for_each(|m| *m *= inv_count);
            let mut var = vec![T::zero(); c];
            for row in input.data().chunks_exact(c) {
                for ((v, &x), &m) in var.iter_mut().zip(row).zip(&mean) {
                    let d = x - m;
                    *v += d * d;
                }
            }
            var.iter_mut().for_each(|v| *v *= inv_count);
            let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + params.epsilon).sqrt()).collect();

            let mut normalized = Vec::with_capacity(input.len());
            let mut out = Vec::with_capacity(input.len());
            for row in input.data().chunks_exact(c) {
                for ((((&x, &m), &s), &g), &b) in row.iter().zip(&mean).zip(&inv_std).zip(gamma).zip(beta) {
                    let xhat = (x - m) * s;
                    normalized.push(xhat);
                    out.push(g * xhat + b);
                }
            }
            let normalized = Tensor::new(input.shape().to_vec(), normalized)?;
            let out = Tensor::new(input.shape().to_vec(), out)?;
            Ok(BatchNormOutput {
                output: out,
                cache: Some(BatchNormCache { normalized, inv_std }),
                stats: Some(BatchStats { mean, var, count }),
            })
        }
    }
}

/// Backward pass of the training-mode forward.
pub fn batchnorm_backward<T: Real>(
    grad_output: &Tensor<T>,
    cache: &BatchNormCache<T>,
    params: &BatchNormParams<T>,
) -> Result<BatchNormGrads<T>, NnError> {
    let c = channels_of(grad_output, params)?;
    if grad_output.shape() != cache.normalized.shape() {
        return Err(NnError::Shape("batch-norm gradient does not match cached batch".into()));
    }
    let count = T::from_usize(grad_output.len() / c).unwrap();
    let gamma = params.gamma.data();
    let mut grad_gamma = vec![T::zero(); c];
    let mut grad_beta = vec![T::zero(); c];
    for (g, xh) in grad_output
        .data()
        .chunks_exact(c)
        .zip(cache.normalized.data().chunks_exact(c))
    {
        for (((gb, gg), &gi), &x) in grad_beta.iter_mut().zip(grad_gamma.iter_mut()).zip(g).zip(xh) {
            *gb += gi;
            *gg += gi * x;
        }
    }
    // With dxhat = γ·dy: dx = inv_std/m · (m·dxhat − Σdxhat − xhat·Σ(dxhat·xhat)).
    // Per channel: dx = a·dy − b − c·xhat.
    let a: Vec<T> = (0..c).map(|i| cache.inv_std[i] * gamma[i]).collect();
    let b: Vec<T> = (0..c).map(|i| cache.inv_std[i] / count * gamma[i] * grad_beta[i]).collect();
    let k: Vec<T> = (0..c).map(|i| cache.inv_std[i] / count * gamma[i] * grad_gamma[i]).collect();
    let mut grad_in = grad_output.clone();
    for (g, xh) in grad_in
        .data_mut()
        .chunks_exact_mut(c)
        .zip(cache.normalized.data().chunks_exact(c))
    {
        for ((((gi, &x), &ai), &bi), &ki) in g.iter_mut().zip(xh).zip(&a).zip(&b).zip(&k) {
            *gi = ai * *gi - bi - ki * x;
        }
    }
    Ok(BatchNormGrads {
        input: grad_in,
        gamma: Tensor::new(vec![c], grad_gamma)?,
        beta: Tensor::new(vec![c], grad_beta)?,
    })
}
