use super::{batch_dims, NnError, Real, Tensor};

pub const KERNEL_SIZE: usize = 3;
const TAPS: usize = KERNEL_SIZE * KERNEL_SIZE;

/// 3×3 convolution with one pixel of zero padding ("same" output size).
///
/// `weights` is K×K×Cin×Cout, `bias` has Cout entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2dParams<T = f32> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct Conv2dGrads<T = f32> {
    /// Absent when the caller did not ask for it (first layer).
    pub input: Option<Tensor<T>>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> Conv2dParams<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self, NnError> {
        let params = Self { weights, bias };
        params.validate()?;
        Ok(params)
    }

    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            weights: Tensor::zeros(&[KERNEL_SIZE, KERNEL_SIZE, in_channels, out_channels]),
            bias: Tensor::zeros(&[out_channels]),
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        match *self.weights.shape() {
            [KERNEL_SIZE, KERNEL_SIZE, _, cout] if self.bias.shape() == [cout] => Ok(()),
            _ => Err(NnError::Shape(format!(
                "conv weights must be 3×3×Cin×Cout with Cout biases, got {:?} and {:?}",
                self.weights.shape(),
                self.bias.shape()
            ))),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[3]
    }
}

/// Fills `cols` (H·W rows × 9·Cin columns) with the padded 3×3 neighbourhood
/// of every pixel, in (ky, kx, c) order to match the weight layout.
fn im2col<T: Real>(image: &[T], h: usize, w: usize, c: usize, cols: &mut [T]) {
    let row_len = TAPS * c;
    for y in 0..h {
        for x in 0..w {
            let row = &mut cols[(y * w + x) * row_len..(y * w + x + 1) * row_len];
            for ky in 0..KERNEL_SIZE {
                let sy = y as isize + ky as isize - 1;
                for kx in 0..KERNEL_SIZE {
                    let sx = x as isize + kx as isize - 1;
                    let dst = &mut row[(ky * KERNEL_SIZE + kx) * c..(ky * KERNEL_SIZE + kx + 1) * c];
                    if sy < 0 || sy >= h as isize || sx < 0 || sx >= w as isize {
                        dst.fill(T::zero());
                    } else {
                        let src = (sy as usize * w + sx as usize) * c;
                        dst.copy_from_slice(&image[src..src + c]);
                    }
                }
            }
        }
    }
}

/// Adjoint of `im2col`: scatters column gradients back onto the image.
fn col2im<T: Real>(cols: &[T], h: usize, w: usize, c: usize, image: &mut [T]) {
    let row_len = TAPS * c;
    for y in 0..h {
        for x in 0..w {
            let row = &cols[(y * w + x) * row_len..(y * w + x + 1) * row_len];
            for ky in 0..KERNEL_SIZE {
                let sy = y as isize + ky as isize - 1;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for kx in 0..KERNEL_SIZE {
                    let sx = x as isize + kx as isize - 1;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let src = &row[(ky * KERNEL_SIZE + kx) * c..(ky * KERNEL_SIZE + kx + 1) * c];
                    let dst = (sy as usize * w + sx as usize) * c;
                    for (d, s) in image[dst..dst + c].iter_mut().zip(src) {
                        *d += *s;
                    }
                }
            }
        }
    }
}

fn check_input<T: Real>(
    input: &Tensor<T>,
    params: &Conv2dParams<T>,
) -> Result<(usize, usize, usize, usize, bool), NnError> {
    params.validate()?;
    let dims = batch_dims(input.shape())?;
    if dims.3 != params.in_channels() {
        return Err(NnError::Shape(format!(
            "conv input has {} channels but weights expect {}",
            dims.3,
            params.in_channels()
        )));
    }
    Ok(dims)
}

/// Forward pass over an H×W×Cin image or an N×H×W×Cin batch.
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    params: &Conv2dParams<T>,
) -> Result<Tensor<T>, NnError> {
    let (n, h, w, cin, single) = check_input(input, params)?;
    let cout = params.out_channels();
    let pixels = h * w;
    let mut cols = vec![T::zero(); pixels * TAPS * cin];
    let mut out = vec![T::zero(); n * pixels * cout];
    let bias = params.bias.data();
    for (sample, out_n) in input
        .data()
        .chunks_exact(pixels * cin)
        .zip(out.chunks_exact_mut(pixels * cout))
    {
        im2col(sample, h, w, cin, &mut cols);
        for row in out_n.chunks_exact_mut(cout) {
            row.copy_from_slice(bias);
        }
        T::gemm(
            pixels,
            TAPS * cin,
            cout,
            T::one(),
            &cols,
            false,
            params.weights.data(),
            false,
            T::one(),
            out_n,
        );
    }
    let shape = if single {
        vec![h, w, cout]
    } else {
        vec![n, h, w, cout]
    };
    Tensor::new(shape, out)
}

/// Backward pass: given dL/d(output), returns parameter gradients and,
/// when `need_input` is set, dL/d(input).
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    params: &Conv2dParams<T>,
    grad_output: &Tensor<T>,
    need_input: bool,
) -> Result<Conv2dGrads<T>, NnError> {
    let (n, h, w, cin, _) = check_input(input, params)?;
    let cout = params.out_channels();
    let pixels = h * w;
    if grad_output.len() != n * pixels * cout {
        return Err(NnError::Shape(format!(
            "conv output gradient {:?} does not match input {:?} with {} filters",
            grad_output.shape(),
            input.shape(),
            cout
        )));
    }
    let mut cols = vec![T::zero(); pixels * TAPS * cin];
    let mut grad_cols = vec![T::zero(); pixels * TAPS * cin];
    let mut grad_w = Tensor::zeros(params.weights.shape());
    let mut grad_b = Tensor::zeros(&[cout]);
    let mut grad_in = if need_input {
        Some(Tensor::zeros(input.shape()))
    } else {
        None
    };

    for (i, (sample, gout)) in input
        .data()
        .chunks_exact(pixels * cin)
        .zip(grad_output.data().chunks_exact(pixels * cout))
        .enumerate()
    {
        im2col(sample, h, w, cin, &mut cols);
        T::gemm(
            TAPS * cin,
            pixels,
            cout,
            T::one(),
            &cols,
            true,
            gout,
            false,
            T::one(),
            grad_w.data_mut(),
        );
        for row in gout.chunks_exact(cout) {
            for (b, g) in grad_b.data_mut().iter_mut().zip(row) {
                *b += *g;
            }
        }
        if let Some(grad_in) = grad_in.as_mut() {
            T::gemm(
                pixels,
                cout,
                TAPS * cin,
                T::one(),
                gout,
                false,
                params.weights.data(),
                true,
                T::zero(),
                &mut grad_cols,
            );
            let dst = &mut grad_in.data_mut()[i * pixels * cin..(i + 1) * pixels * cin];
            col2im(&grad_cols, h, w, cin, dst);
        }
    }
    Ok(Conv2dGrads {
        input: grad_in,
        weights: grad_w,
        bias: grad_b,
    })
}
