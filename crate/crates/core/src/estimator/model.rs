use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EstimatorError;
use crate::nn::{
    batchnorm_backward, batchnorm_forward, conv2d_backward, conv2d_forward, linear_backward,
    linear_forward, maxpool2x2, maxpool2x2_backward, relu, relu_backward, softmax,
    softmax_cross_entropy, BatchNormCache, BatchNormMode, BatchNormParams, BatchStats,
    Conv2dParams, LinearParams, PoolIndices, Real, Tensor, KERNEL_SIZE,
};
use crate::strip::{DOUBLE_EYE_WIDTH, SINGLE_EYE_WIDTH, STRIP_HEIGHT};

/// Conv → BN → ReLU → 2×2 max-pool blocks before the classifier.
pub const CONV_BLOCKS: usize = 3;
pub const INPUT_CHANNELS: usize = 3;
const DOWNSAMPLE: usize = 1 << CONV_BLOCKS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl ModelConfig {
    /// 32×128 two-eye input.
    pub fn double_eye() -> Self {
        Self {
            height: STRIP_HEIGHT,
            width: DOUBLE_EYE_WIDTH,
            filters: 64,
            hidden: 300,
            classes: 10,
        }
    }

    /// 32×64 one-eye input, same layers.
    pub fn single_eye() -> Self {
        Self {
            width: SINGLE_EYE_WIDTH,
            ..Self::double_eye()
        }
    }

    pub fn for_width(width: usize) -> Self {
        Self {
            width,
            ..Self::double_eye()
        }
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        if self.width == 0 || !self.width.is_multiple_of(DOWNSAMPLE) || self.height == 0 || !self.height.is_multiple_of(DOWNSAMPLE) {
            return Err(EstimatorError::Config(format!(
                "input {}x{} must be a positive multiple of {DOWNSAMPLE} in both dimensions",
                self.height, self.width
            )));
        }
        if self.filters == 0 || self.hidden == 0 || self.classes < 2 {
            return Err(EstimatorError::Config("filters, hidden units and classes must be positive".into()));
        }
        Ok(())
    }

    /// Flattened feature count entering the first fully connected layer.
    pub fn fc_inputs(&self) -> usize {
        (self.height / DOWNSAMPLE) * (self.width / DOWNSAMPLE) * self.filters
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvBlock<T = f32> {
    pub conv: Conv2dParams<T>,
    pub bn: BatchNormParams<T>,
}

/// All learnable tensors plus batch-norm running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = f32> {
    pub config: ModelConfig,
    pub blocks: Vec<ConvBlock<T>>,
    pub fc1: LinearParams<T>,
    pub fc2: LinearParams<T>,
}

/// Gradients in the order of [`ModelParams::learnable`].
#[derive(Clone, Debug)]
pub struct Gradients<T = f32>(pub Vec<Tensor<T>>);

#[derive(Debug)]
struct BlockCache<T> {
    input: Tensor<T>,
    bn: BatchNormCache<T>,
    stats: BatchStats<T>,
    pre_relu: Tensor<T>,
    pool: PoolIndices,
}

/// Result of one training-mode forward and backward pass.
#[derive(Debug)]
pub struct BatchPass<T = f32> {
    /// Mean cross-entropy over the batch.
    pub loss: T,
    pub grads: Gradients<T>,
    /// Batch statistics of each batch-norm layer, to fold into the running
    /// averages once the step is accepted.
    pub stats: Vec<BatchStats<T>>,
}

fn uniform<T: Real>(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::lit(rng.gen_range(-bound..bound)))
}

impl<T: Real> ModelParams<T> {
    /// Zero-mean uniform weights scaled by fan-in (He bound for layers
    /// feeding a ReLU, LeCun bound for the logits), zero biases, identity
    /// batch norm.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, EstimatorError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks = Vec::with_capacity(CONV_BLOCKS);
        let mut cin = INPUT_CHANNELS;
        for _ in 0..CONV_BLOCKS {
            let fan_in = KERNEL_SIZE * KERNEL_SIZE * cin;
            let conv = Conv2dParams {
                weights: uniform(&[KERNEL_SIZE, KERNEL_SIZE, cin, config.filters], (6.0 / fan_in as f64).sqrt(), &mut rng),
                bias: Tensor::zeros(&[config.filters]),
            };
            blocks.push(ConvBlock {
                conv,
                bn: BatchNormParams::new(config.filters),
            });
            cin = config.filters;
        }
        let d = config.fc_inputs();
        let fc1 = LinearParams {
            weights: uniform(&[d, config.hidden], (6.0 / d as f64).sqrt(), &mut rng),
            bias: Tensor::zeros(&[config.hidden]),
        };
        let fc2 = LinearParams {
            weights: uniform(&[config.hidden, config.classes], (3.0 / config.hidden as f64).sqrt(), &mut rng),
            bias: Tensor::zeros(&[config.classes]),
        };
        Ok(Self { config, blocks, fc1, fc2 })
    }

    pub fn learnable(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.extend([&b.conv.weights, &b.conv.bias, &b.bn.gamma, &b.bn.beta]);
        }
        out.extend([&self.fc1.weights, &self.fc1.bias, &self.fc2.weights, &self.fc2.bias]);
        out
    }

    pub fn learnable_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.conv.weights);
            out.push(&mut b.conv.bias);
            out.push(&mut b.bn.gamma);
            out.push(&mut b.bn.beta);
        }
        out.push(&mut self.fc1.weights);
        out.push(&mut self.fc1.bias);
        out.push(&mut self.fc2.weights);
        out.push(&mut self.fc2.bias);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.learnable().iter().map(|t| t.len()).sum()
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<usize, EstimatorError> {
        let c = &self.config;
        match *batch.shape() {
            [n, h, w, INPUT_CHANNELS] if h == c.height && w == c.width && n > 0 => Ok(n),
            _ => Err(EstimatorError::Dimensions {
                expected: (c.height, c.width),
                got: batch.shape().to_vec(),
            }),
        }
    }

    /// Logits (N×classes) with batch norm in inference mode.
    pub fn logits(&self, batch: &Tensor<T>) -> Result<Tensor<T>, EstimatorError> {
        let n = self.check_batch(batch)?;
        let mut x = batch.clone();
        for block in &self.blocks {
            let conv = conv2d_forward(&x, &block.conv)?;
            let bn = batchnorm_forward(&conv, &block.bn, BatchNormMode::Infer)?.output;
            x = maxpool2x2(&relu(&bn))?.0;
        }
        let flat = x.reshape(&[n, self.config.fc_inputs()])?;
        let hidden = relu(&linear_forward(&flat, &self.fc1)?);
        Ok(linear_forward(&hidden, &self.fc2)?)
    }

    /// Output shape of every layer for `batch`, in order, from a real
    /// inference-mode pass.
    pub fn layer_shapes(&self, batch: &Tensor<T>) -> Result<Vec<(&'static str, Vec<usize>)>, EstimatorError> {
        let n = self.check_batch(batch)?;
        let mut shapes = Vec::new();
        let mut x = batch.clone();
        for block in &self.blocks {
            let conv = conv2d_forward(&x, &block.conv)?;
            shapes.push(("conv", conv.shape().to_vec()));
            let bn = batchnorm_forward(&conv, &block.bn, BatchNormMode::Infer)?.output;
            shapes.push(("batchnorm", bn.shape().to_vec()));
            let r = relu(&bn);
            shapes.push(("relu", r.shape().to_vec()));
            x = maxpool2x2(&r)?.0;
            shapes.push(("maxpool", x.shape().to_vec()));
        }
        let flat = x.reshape(&[n, self.config.fc_inputs()])?;
        shapes.push(("flatten", flat.shape().to_vec()));
        let hidden = relu(&linear_forward(&flat, &self.fc1)?);
        shapes.push(("fc1+relu", hidden.shape().to_vec()));
        shapes.push(("fc2", linear_forward(&hidden, &self.fc2)?.shape().to_vec()));
        Ok(shapes)
    }

    /// Softmax scores per sample.
    pub fn predict_batch(&self, batch: &Tensor<T>) -> Result<Vec<Vec<T>>, EstimatorError> {
        let logits = self.logits(batch)?;
        Ok(logits.data().chunks_exact(self.config.classes).map(softmax).collect())
    }

    /// Training-mode forward pass, mean cross-entropy and full backward pass.
    /// Does not modify the parameters.
    pub fn forward_backward(&self, batch: &Tensor<T>, labels: &[usize]) -> Result<BatchPass<T>, EstimatorError> {
        let n = self.check_batch(batch)?;
        if labels.len() != n {
            return Err(EstimatorError::Config(format!("{} labels for a batch of {n}", labels.len())));
        }
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut x = batch.clone();
        for block in &self.blocks {
            let conv = conv2d_forward(&x, &block.conv)?;
            let bn = batchnorm_forward(&conv, &block.bn, BatchNormMode::Train)?;
            let pre_relu = bn.output;
            let (pooled, pool) = maxpool2x2(&relu(&pre_relu))?;
            caches.push(BlockCache {
                input: x,
                bn: bn.cache.expect("train mode cache"),
                stats: bn.stats.expect("train mode stats"),
                pre_relu,
                pool,
            });
            x = pooled;
        }
        let pooled_shape = x.shape().to_vec();
        let flat = x.reshape(&[n, self.config.fc_inputs()])?;
        let fc1_out = linear_forward(&flat, &self.fc1)?;
        let hidden = relu(&fc1_out);
        let logits = linear_forward(&hidden, &self.fc2)?;

        let classes = self.config.classes;
        let scale = T::one() / T::from_usize(n).unwrap();
        let mut loss = T::zero();
        let mut grad_logits = Vec::with_capacity(n * classes);
        for (row, &label) in logits.data().chunks_exact(classes).zip(labels) {
            let out = softmax_cross_entropy(row, label);
            loss += out.loss * scale;
            grad_logits.extend(out.grad.into_iter().map(|g| g * scale));
        }
        let grad_logits = Tensor::new(vec![n, classes], grad_logits)?;

        let g2 = linear_backward(&hidden, &self.fc2, &grad_logits)?;
        let g_hidden = relu_backward(&fc1_out, &g2.input)?;
        let g1 = linear_backward(&flat, &self.fc1, &g_hidden)?;
        let mut grad = g1.input.reshape(&pooled_shape)?;

        let mut block_grads = Vec::with_capacity(self.blocks.len());
        for (i, (block, cache)) in self.blocks.iter().zip(&caches).enumerate().rev() {
            let g_relu = maxpool2x2_backward(&grad, &cache.pool)?;
            let g_bn_out = relu_backward(&cache.pre_relu, &g_relu)?;
            let g_bn = batchnorm_backward(&g_bn_out, &cache.bn, &block.bn)?;
            let g_conv = conv2d_backward(&cache.input, &block.conv, &g_bn.input, i > 0)?;
            if let Some(g) = g_conv.input {
                grad = g;
            }
            block_grads.push([g_conv.weights, g_conv.bias, g_bn.gamma, g_bn.beta]);
        }
        block_grads.reverse();
        let mut grads: Vec<Tensor<T>> = block_grads.into_iter().flatten().collect();
        grads.extend([g1.weights, g1.bias, g2.weights, g2.bias]);

        Ok(BatchPass {
            loss,
            grads: Gradients(grads),
            stats: caches.into_iter().map(|c| c.stats).collect(),
        })
    }

    pub fn update_running_stats(&mut self, stats: &[BatchStats<T>]) {
        for (block, s) in self.blocks.iter_mut().zip(stats) {
            block.bn.update_running_stats(s);
        }
    }
}

/// Initial parameters for `config`, deterministic in `seed`.
pub fn build_model(config: ModelConfig, seed: u64) -> Result<ModelParams<f32>, EstimatorError> {
    ModelParams::init(config, seed)
}
