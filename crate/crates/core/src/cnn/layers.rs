//! Forward and backward kernels for each layer kind.

use super::tensor::{gemm_nn, gemm_nt, gemm_tn, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Weight and bias of an affine layer. Convolution weights are
/// `(out_channels, in_channels, k, k)`, dense weights `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBias<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub type ConvParams<T> = WeightBias<T>;
pub type DenseParams<T> = WeightBias<T>;

#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub type DenseGrads<T> = ConvGrads<T>;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Scalar> BatchNormParams<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], T::one()),
            momentum: 0.9,
            eps: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// Saved by a training-mode batch norm pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    x_hat: Tensor<T>,
    inv_std: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

/// Output extent of a sliding window, or `None` if the window does not fit.
pub fn output_extent(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    if stride == 0 || kernel == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

struct ConvGeometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeometry {
    fn new<T: Scalar>(
        input: &Tensor<T>,
        params: &ConvParams<T>,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let (_, c, h, w) = input.dims4()?;
        let (f, kc, kh, kw) = params.weight.dims4()?;
        if kc != c {
            return Err(Error::arg(format!(
                "input has {} channels, kernel expects {}",
                c, kc
            )));
        }
        if kh != kw {
            return Err(Error::arg(format!(
                "kernel must be square, got {}x{}",
                kh, kw
            )));
        }
        if params.bias.len() != f {
            return Err(Error::Length {
                expected: f,
                found: params.bias.len(),
            });
        }
        let oh = output_extent(h, kh, stride, padding);
        let ow = output_extent(w, kw, stride, padding);
        match (oh, ow) {
            (Some(oh), Some(ow)) => Ok(Self {
                c,
                h,
                w,
                k: kh,
                stride,
                padding,
                oh,
                ow,
            }),
            _ => Err(Error::arg(format!(
                "{}x{} kernel (stride {}, padding {}) does not fit a {}x{} input",
                kh, kw, stride, padding, h, w
            ))),
        }
    }

    fn col_rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn col_cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Source pixel for output `(oy, ox)` and kernel tap `(ki, kj)`.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ki: usize, kj: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ki).checked_sub(self.padding)?;
        let x = (ox * self.stride + kj).checked_sub(self.padding)?;
        (y < self.h && x < self.w).then_some((y, x))
    }

    fn im2col<T: Scalar>(&self, image: &[T], cols: &mut [T]) {
        let n = self.col_cols();
        for ch in 0..self.c {
            let plane = &image[ch * self.h * self.w..(ch + 1) * self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = (ch * self.k + ki) * self.k + kj;
                    let dst = &mut cols[row * n..(row + 1) * n];
                    for oy in 0..self.oh {
                        for ox in 0..self.ow {
                            dst[oy * self.ow + ox] = match self.source(oy, ox, ki, kj) {
                                Some((y, x)) => plane[y * self.w + x],
                                None => T::zero(),
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Scalar>(&self, cols: &[T], image: &mut [T]) {
        let n = self.col_cols();
        for ch in 0..self.c {
            let plane = &mut image[ch * self.h * self.w..(ch + 1) * self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = (ch * self.k + ki) * self.k + kj;
                    let src = &cols[row * n..(row + 1) * n];
                    for oy in 0..self.oh {
                        for ox in 0..self.ow {
                            if let Some((y, x)) = self.source(oy, ox, ki, kj) {
                                plane[y * self.w + x] += src[oy * self.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Zero-padded cross-correlation.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    params: &ConvParams<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(input, params, stride, padding)?;
    let (n, ..) = input.dims4()?;
    let f = params.weight.shape()[0];
    let (rows, cols_n) = (g.col_rows(), g.col_cols());
    let mut cols = vec![T::zero(); rows * cols_n];
    let mut out = vec![T::zero(); n * f * cols_n];
    for i in 0..n {
        g.im2col(input.item(i), &mut cols);
        let dst = &mut out[i * f * cols_n..(i + 1) * f * cols_n];
        gemm_nn(f, cols_n, rows, params.weight.data(), &cols, dst, false);
        for (o, &b) in params.bias.data().iter().enumerate() {
            dst[o * cols_n..(o + 1) * cols_n]
                .iter_mut()
                .for_each(|v| *v += b);
        }
    }
    Ok(Tensor::from_raw(vec![n, f, g.oh, g.ow], out))
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    params: &ConvParams<T>,
    stride: usize,
    padding: usize,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let g = ConvGeometry::new(input, params, stride, padding)?;
    let (n, ..) = input.dims4()?;
    let f = params.weight.shape()[0];
    let expected = [n, f, g.oh, g.ow];
    if grad_out.shape() != expected {
        return Err(Error::arg(format!(
            "upstream gradient shape {:?} does not match output {:?}",
            grad_out.shape(),
            expected
        )));
    }
    let (rows, cols_n) = (g.col_rows(), g.col_cols());
    let mut cols = vec![T::zero(); rows * cols_n];
    let mut dcols = vec![T::zero(); rows * cols_n];
    let mut dw = vec![T::zero(); f * rows];
    let mut db = vec![T::zero(); f];
    let mut dx = vec![T::zero(); input.len()];
    let per_item = input.len() / n.max(1);
    for i in 0..n {
        g.im2col(input.item(i), &mut cols);
        let dy = grad_out.item(i);
        gemm_nt(f, rows, cols_n, dy, &cols, &mut dw, true);
        for (o, acc) in db.iter_mut().enumerate() {
            *acc += dy[o * cols_n..(o + 1) * cols_n].iter().copied().sum::<T>();
        }
        gemm_tn(rows, cols_n, f, params.weight.data(), dy, &mut dcols, false);
        g.col2im(&dcols, &mut dx[i * per_item..(i + 1) * per_item]);
    }
    Ok(ConvGrads {
        input: Tensor::from_raw(input.shape().to_vec(), dx),
        weight: Tensor::from_raw(params.weight.shape().to_vec(), dw),
        bias: Tensor::from_raw(vec![f], db),
    })
}

/// Max pooling result with the flat input index that won each window.
#[derive(Debug, Clone)]
pub struct Pooled<T> {
    pub output: Tensor<T>,
    pub argmax: Vec<usize>,
}

/// Per-window maximum; ties go to the first position in row-major order.
pub fn maxpool2d<T: Scalar>(input: &Tensor<T>, window: usize, stride: usize) -> Result<Pooled<T>> {
    let (n, c, h, w) = input.dims4()?;
    let (oh, ow) = match (
        output_extent(h, window, stride, 0),
        output_extent(w, window, stride, 0),
    ) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => {
            return Err(Error::arg(format!(
                "pool window {} (stride {}) does not fit a {}x{} input",
                window, stride, h, w
            )))
        }
    };
    let data = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride * w + ox * stride;
                for y in oy * stride..oy * stride + window {
                    for x in ox * stride..ox * stride + window {
                        let idx = base + y * w + x;
                        if data[idx] > data[best] {
                            best = idx;
                        }
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
    }
    Ok(Pooled {
        output: Tensor::from_raw(vec![n, c, oh, ow], out),
        argmax,
    })
}

/// Route each upstream gradient to its window's winner.
pub fn maxpool2d_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if grad_out.len() != argmax.len() {
        return Err(Error::Length {
            expected: argmax.len(),
            found: grad_out.len(),
        });
    }
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        d[idx] += g;
    }
    Ok(dx)
}

/// Per-channel normalization over batch and spatial axes. Training mode
/// uses batch statistics and folds them into the running estimates
/// (unbiased variance); inference mode uses the running estimates.
pub fn batchnorm2d<T: Scalar>(
    input: &Tensor<T>,
    params: &mut BatchNormParams<T>,
    mode: Mode,
) -> Result<(Tensor<T>, Option<BatchNormCache<T>>)> {
    if mode == Mode::Infer {
        return Ok((batchnorm2d_infer(input, params)?, None));
    }
    let (n, c, h, w) = input.dims4()?;
    if c != params.channels() {
        return Err(Error::arg(format!(
            "input has {} channels, batch norm expects {}",
            c,
            params.channels()
        )));
    }
    if n < 2 {
        return Err(Error::arg(
            "batch norm in training mode needs a batch of at least 2",
        ));
    }
    let hw = h * w;
    let m = n * hw;
    let eps = T::cast(params.eps);
    let x = input.data();
    let mut out = vec![T::zero(); x.len()];
    let mut x_hat = vec![T::zero(); x.len()];
    let mut inv_std = Vec::with_capacity(c);
    let momentum = T::cast(params.momentum);
    let mf = T::count(m);
    for ch in 0..c {
        let indices = || (0..n).flat_map(move |i| (i * c + ch) * hw..(i * c + ch) * hw + hw);
        let mean = indices().map(|j| x[j]).sum::<T>() / mf;
        let var = indices().map(|j| (x[j] - mean) * (x[j] - mean)).sum::<T>() / mf;
        let inv = T::one() / (var + eps).sqrt();
        let (gamma, beta) = (params.gamma.data()[ch], params.beta.data()[ch]);
        for j in indices() {
            x_hat[j] = (x[j] - mean) * inv;
            out[j] = gamma * x_hat[j] + beta;
        }
        inv_std.push(inv);
        let unbiased = var * mf / T::count(m - 1);
        let rm = &mut params.running_mean.data_mut()[ch];
        *rm = momentum * *rm + (T::one() - momentum) * mean;
        let rv = &mut params.running_var.data_mut()[ch];
        *rv = momentum * *rv + (T::one() - momentum) * unbiased;
    }
    let shape = input.shape().to_vec();
    Ok((
        Tensor::from_raw(shape.clone(), out),
        Some(BatchNormCache {
            x_hat: Tensor::from_raw(shape, x_hat),
            inv_std,
        }),
    ))
}

/// Inference-mode batch norm; leaves `params` untouched.
pub fn batchnorm2d_infer<T: Scalar>(
    input: &Tensor<T>,
    params: &BatchNormParams<T>,
) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.dims4()?;
    if c != params.channels() {
        return Err(Error::arg(format!(
            "input has {} channels, batch norm expects {}",
            c,
            params.channels()
        )));
    }
    let hw = h * w;
    let eps = T::cast(params.eps);
    let x = input.data();
    let mut out = vec![T::zero(); x.len()];
    for ch in 0..c {
        let mean = params.running_mean.data()[ch];
        let inv = T::one() / (params.running_var.data()[ch] + eps).sqrt();
        let (gamma, beta) = (params.gamma.data()[ch], params.beta.data()[ch]);
        for i in 0..n {
            let off = (i * c + ch) * hw;
            for j in off..off + hw {
                out[j] = gamma * (x[j] - mean) * inv + beta;
            }
        }
    }
    Ok(Tensor::from_raw(input.shape().to_vec(), out))
}

pub fn batchnorm2d_backward<T: Scalar>(
    params: &BatchNormParams<T>,
    cache: &BatchNormCache<T>,
    grad_out: &Tensor<T>,
) -> Result<BatchNormGrads<T>> {
    if grad_out.shape() != cache.x_hat.shape() {
        return Err(Error::arg(format!(
            "upstream gradient shape {:?} does not match {:?}",
            grad_out.shape(),
            cache.x_hat.shape()
        )));
    }
    let (n, c, h, w) = grad_out.dims4()?;
    let hw = h * w;
    let mf = T::count(n * hw);
    let dy = grad_out.data();
    let xh = cache.x_hat.data();
    let mut dx = vec![T::zero(); dy.len()];
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for ch in 0..c {
        let indices = || (0..n).flat_map(move |i| (i * c + ch) * hw..(i * c + ch) * hw + hw);
        let sum_dy: T = indices().map(|j| dy[j]).sum();
        let sum_dy_xh: T = indices().map(|j| dy[j] * xh[j]).sum();
        dgamma[ch] = sum_dy_xh;
        dbeta[ch] = sum_dy;
        let scale = params.gamma.data()[ch] * cache.inv_std[ch] / mf;
        for j in indices() {
            dx[j] = scale * (mf * dy[j] - sum_dy - xh[j] * sum_dy_xh);
        }
    }
    Ok(BatchNormGrads {
        input: Tensor::from_raw(grad_out.shape().to_vec(), dx),
        gamma: Tensor::from_raw(vec![c], dgamma),
        beta: Tensor::from_raw(vec![c], dbeta),
    })
}

fn dense_dims<T: Scalar>(
    input: &Tensor<T>,
    params: &DenseParams<T>,
) -> Result<(usize, usize, usize)> {
    let (n, d) = input.batch_rows();
    let (out, cols) = match params.weight.shape() {
        &[o, i] => (o, i),
        s => {
            return Err(Error::arg(format!(
                "dense weight must be rank 2, got {:?}",
                s
            )))
        }
    };
    if d != cols {
        return Err(Error::arg(format!(
            "dense input has {} features, weight expects {}",
            d, cols
        )));
    }
    if params.bias.len() != out {
        return Err(Error::Length {
            expected: out,
            found: params.bias.len(),
        });
    }
    Ok((n, d, out))
}

/// Affine map over the flattened trailing axes: `(N, ...) -> (N, out)`.
pub fn dense<T: Scalar>(input: &Tensor<T>, params: &DenseParams<T>) -> Result<Tensor<T>> {
    let (n, d, out) = dense_dims(input, params)?;
    let mut y = vec![T::zero(); n * out];
    gemm_nt(n, out, d, input.data(), params.weight.data(), &mut y, false);
    for row in y.chunks_mut(out) {
        for (v, &b) in row.iter_mut().zip(params.bias.data()) {
            *v += b;
        }
    }
    Ok(Tensor::from_raw(vec![n, out], y))
}

pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    params: &DenseParams<T>,
    grad_out: &Tensor<T>,
) -> Result<DenseGrads<T>> {
    let (n, d, out) = dense_dims(input, params)?;
    if grad_out.shape() != [n, out] {
        return Err(Error::arg(format!(
            "upstream gradient shape {:?} does not match [{}, {}]",
            grad_out.shape(),
            n,
            out
        )));
    }
    let mut dx = vec![T::zero(); n * d];
    gemm_nn(
        n,
        d,
        out,
        grad_out.data(),
        params.weight.data(),
        &mut dx,
        false,
    );
    let mut dw = vec![T::zero(); out * d];
    gemm_tn(out, d, n, grad_out.data(), input.data(), &mut dw, false);
    let mut db = vec![T::zero(); out];
    for row in grad_out.data().chunks(out) {
        for (acc, &g) in db.iter_mut().zip(row) {
            *acc += g;
        }
    }
    Ok(DenseGrads {
        input: Tensor::from_raw(input.shape().to_vec(), dx),
        weight: Tensor::from_raw(vec![out, d], dw),
        bias: Tensor::from_raw(vec![out], db),
    })
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| v.max(T::zero()))
}

pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_raw(input.shape().to_vec(), data)
}
