//! Dense-tensor kernels for the gaze CNN.
//!
//! Every layer is a pair of free functions (forward, backward) over NHWC
//! batches. Parameters are plain structs so that a trained model can be
//! shared immutably across inference threads; nothing here caches state
//! between calls.

mod activation;
mod batchnorm;
mod conv;
pub mod gradcheck;
mod linear;
mod loss;
mod optim;
mod pool;
mod tensor;
pub mod weights;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};
use thiserror::Error;

pub use activation::{relu, relu_backward};
pub use batchnorm::{
    batchnorm_backward, batchnorm_forward, BatchNormCache, BatchNormGrads, BatchNormMode,
    BatchNormOutput, BatchNormParams, BatchStats,
};
pub use conv::{conv2d_backward, conv2d_forward, Conv2dGrads, Conv2dParams, KERNEL_SIZE};
pub use linear::{linear_backward, linear_forward, LinearGrads, LinearParams};
pub use loss::{softmax, softmax_cross_entropy, SoftmaxLoss};
pub use optim::Sgd;
pub use pool::{maxpool2x2, maxpool2x2_backward, PoolIndices};
pub use tensor::Tensor;
pub use weights::{read_layers, write_layers, LayerParams};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("max pooling needs even spatial dimensions, got {height}x{width}")]
    OddDimension { height: usize, width: usize },
    #[error("batch normalization in training mode needs at least 2 samples per channel, got {0}")]
    BatchTooSmall(usize),
    #[error("non-finite gradient in parameter tensor {0}")]
    NonFiniteGradient(usize),
    #[error("bad magic: expected G9W1")]
    BadMagic,
    #[error("unsupported weight format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated payload: {0}")]
    Truncated(String),
    #[error("shape table mismatch: {0}")]
    ShapeTable(String),
    #[error("unknown layer kind tag {0}")]
    UnknownLayerKind(u8),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Floating-point element type for tensors.
///
/// Implemented for `f32` (training and inference) and `f64` (gradient
/// checks).
pub trait Real:
    Float
    + FromPrimitive
    + Default
    + Debug
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    /// `c = alpha * op(a) * op(b) + beta * c` with `op(a)` m×k and `op(b)`
    /// k×n, all row-major. `trans_*` selects the transpose of the stored
    /// matrix.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        trans_a: bool,
        b: &[Self],
        trans_b: bool,
        beta: Self,
        c: &mut [Self],
    );

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal fits in Real")
    }
}

macro_rules! impl_real {
    ($t:ty, $kernel:path) => {
        impl Real for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                trans_a: bool,
                b: &[Self],
                trans_b: bool,
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                // Row/column strides of op(x) for row-major storage.
                let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
                let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
                // SAFETY: the assertion above bounds every index the kernel touches.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// Views a rank-3 tensor as a batch of one, returning whether it was unbatched.
pub(crate) fn batch_dims(shape: &[usize]) -> Result<(usize, usize, usize, usize, bool), NnError> {
    match *shape {
        [h, w, c] => Ok((1, h, w, c, true)),
        [n, h, w, c] => Ok((n, h, w, c, false)),
        _ => Err(NnError::Shape(format!(
            "expected H×W×C or N×H×W×C, got {:?}",
            shape
        ))),
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    pub(crate) use super::gradcheck::{assert_grad_close, numeric_grad, seeded_tensor};
}
