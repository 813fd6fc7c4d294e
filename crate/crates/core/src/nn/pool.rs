use super::{batch_dims, NnError, Real, Tensor};

/// Flat input index of the maximum for every pooled output element.
#[derive(Clone, Debug)]
pub struct PoolIndices {
    argmax: Vec<usize>,
    input_shape: Vec<usize>,
}

/// 2×2 max pooling with stride 2. Ties go to the first element in scan
/// order (top-left, top-right, bottom-left, bottom-right).
pub fn maxpool2x2<T: Real>(t: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices), NnError> {
    let (n, h, w, c, single) = batch_dims(t.shape())?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(NnError::OddDimension { height: h, width: w });
    }
    let (oh, ow) = (h / 2, w / 2);
    let data = t.data();
    let mut out = Vec::with_capacity(n * oh * ow * c);
    let mut argmax = Vec::with_capacity(n * oh * ow * c);
    for b in 0..n {
        let base = b * h * w * c;
        for oy in 0..oh {
            for ox in 0..ow {
                let at = |dy: usize, dx: usize| base + ((2 * oy + dy) * w + 2 * ox + dx) * c;
                let corners = [at(0, 0), at(0, 1), at(1, 0), at(1, 1)];
                for ch in 0..c {
                    let mut best_idx = corners[0] + ch;
                    let mut best = data[best_idx];
                    for &corner in &corners[1..] {
                        let v = data[corner + ch];
                        if v > best {
                            best = v;
                            best_idx = corner + ch;
                        }
                    }
                    out.push(best);
                    argmax.push(best_idx);
                }
            }
        }
    }
    let shape = if single { vec![oh, ow, c] } else { vec![n, oh, ow, c] };
    Ok((
        Tensor::new(shape, out)?,
        PoolIndices {
            argmax,
            input_shape: t.shape().to_vec(),
        },
    ))
}

/// Routes each output gradient to the input position that won the max.
pub fn maxpool2x2_backward<T: Real>(
    grad_output: &Tensor<T>,
    indices: &PoolIndices,
) -> Result<Tensor<T>, NnError> {
    if grad_output.len() != indices.argmax.len() {
        return Err(NnError::Shape(format!(
            "pool gradient has {} elements, forward produced {}",
            grad_output.len(),
            indices.argmax.len()
        )));
    }
    let mut grad = Tensor::zeros(&indices.input_shape);
    for (&idx, &g) in indices.argmax.iter().zip(grad_output.data()) {
        grad.data_mut()[idx] += g;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::test_support::seeded_tensor;

    #[test]
    fn picks_window_max() {
        let t = Tensor::<f64>::new(vec![2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (out, _) = maxpool2x2(&t).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data(), &[4.0]);
    }

    #[test]
    fn constant_input_gives_constant_output() {
        let t = Tensor::<f64>::filled(&[2, 4, 6, 3], 0.25);
        let (out, idx) = maxpool2x2(&t).unwrap();
        assert_eq!(out.shape(), &[2, 2, 3, 3]);
        assert!(out.data().iter().all(|&v| v == 0.25));
        // Ties resolve to the top-left element of each window.
        let g = maxpool2x2_backward(&Tensor::filled(out.shape(), 1.0), &idx).unwrap();
        assert_eq!(g.data()[0], 1.0);
        assert_eq!(g.data()[3], 0.0);
    }

    #[test]
    fn odd_dimensions_rejected() {
        let t = Tensor::<f32>::zeros(&[3, 4, 1]);
        assert!(matches!(maxpool2x2(&t), Err(NnError::OddDimension { height: 3, width: 4 })));
    }

    #[test]
    fn backward_conserves_gradient_mass() {
        for seed in 0..10 {
            let t = seeded_tensor(&[2, 6, 8, 3], seed);
            let (out, idx) = maxpool2x2(&t).unwrap();
            let g_out = seeded_tensor(out.shape(), seed + 100);
            let g_in = maxpool2x2_backward(&g_out, &idx).unwrap();
            assert!((g_in.sum() - g_out.sum()).abs() < 1e-12);
            assert_eq!(g_in.data().iter().filter(|v| **v != 0.0).count(), g_out.len());
        }
    }
}

#[cfg(test)]
mod gradient_tests {
    use super::*;
    use crate::nn::test_support::{assert_grad_close, numeric_grad, seeded_tensor};

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5 {
            let t = seeded_tensor(&[2, 4, 4, 2], 50 + seed);
            let (out, idx) = maxpool2x2(&t).unwrap();
            let probe = seeded_tensor(out.shape(), 60 + seed);
            let analytic = maxpool2x2_backward(&probe, &idx).unwrap();
            let numeric = numeric_grad(&t, |x| {
                let (o, _) = maxpool2x2(x).unwrap();
                o.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
            });
            assert_grad_close(&analytic, &numeric);
        }
    }
}
