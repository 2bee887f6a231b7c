//! Layer primitives with hand-written backward passes.
//!
//! Batched variants work on `T x d` matrices where each row is one timestep;
//! the vector variants are the single-row special case.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{gemm, matvec, Tensor2, Trans};
use crate::error::{Error, Result};

/// Variance epsilon used by every layer normalisation.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Affine map `W x + b` with `W` stored out x in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub weight: Tensor2,
    pub bias: Tensor2,
}

impl LinearParams {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Tensor2::zeros(output, input),
            bias: Tensor2::zeros(1, output),
        }
    }

    pub fn new(weight: Tensor2, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::dim("LinearParams bias", weight.rows(), bias.len()));
        }
        Ok(Self {
            weight,
            bias: Tensor2::row_vector(bias),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    x.tanh()
}

#[inline]
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
pub fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn mish(x: f64) -> f64 {
    x * softplus(x).tanh()
}

#[inline]
pub fn mish_grad(x: f64) -> f64 {
    let t = softplus(x).tanh();
    t + x * (1.0 - t * t) * sigmoid(x)
}

/// `W x + b`.
pub fn linear(x: &[f64], p: &LinearParams) -> Result<Vec<f64>> {
    if x.len() != p.input_dim() {
        return Err(Error::dim("linear input", p.input_dim(), x.len()));
    }
    let mut out = vec![0.0; p.output_dim()];
    matvec(&p.weight, x, &mut out);
    for (o, b) in out.iter_mut().zip(p.bias.data()) {
        *o += b;
    }
    Ok(out)
}

/// Row-wise `X Wᵀ + b`.
pub fn linear_rows(x: &Tensor2, p: &LinearParams) -> Tensor2 {
    let mut y = Tensor2::zeros(x.rows(), p.output_dim());
    gemm(1.0, x, Trans::N, &p.weight, Trans::T, 0.0, &mut y);
    y.add_row_broadcast(p.bias.data());
    y
}

/// Accumulates parameter gradients of [`linear_rows`] and returns `dX`.
pub fn linear_rows_backward(x: &Tensor2, p: &LinearParams, dy: &Tensor2, grad: &mut LinearParams) -> Tensor2 {
    gemm(1.0, dy, Trans::T, x, Trans::N, 1.0, &mut grad.weight);
    dy.sum_rows_into(grad.bias.data_mut());
    let mut dx = Tensor2::zeros(x.rows(), p.input_dim());
    gemm(1.0, dy, Trans::N, &p.weight, Trans::N, 0.0, &mut dx);
    dx
}

/// Same as [`linear_rows_backward`] but skips the input gradient.
pub fn linear_rows_backward_params(x: &Tensor2, dy: &Tensor2, grad: &mut LinearParams) {
    gemm(1.0, dy, Trans::T, x, Trans::N, 1.0, &mut grad.weight);
    dy.sum_rows_into(grad.bias.data_mut());
}

/// Numerically stable softmax.
pub fn softmax(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::dim("softmax", "non-empty", 0));
    }
    let mut out = x.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

/// Gradient through a softmax given its output `y`: `y ⊙ (dy − ⟨y, dy⟩)`.
pub fn softmax_backward(y: &[f64], dy: &[f64], dx: &mut [f64]) {
    let inner: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
    for ((d, &yi), &dyi) in dx.iter_mut().zip(y).zip(dy) {
        *d = yi * (dyi - inner);
    }
}

/// Layer normalisation of one vector followed by the elementwise affine.
pub fn layer_norm(x: &[f64], gain: &[f64], offset: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::dim("layer_norm input", ">= 2", x.len()));
    }
    if gain.len() != x.len() || offset.len() != x.len() {
        return Err(Error::dim("layer_norm affine", x.len(), gain.len().min(offset.len())));
    }
    let xt = Tensor2::row_vector(x.to_vec());
    let (y, _) = layer_norm_rows(&xt, gain, offset);
    Ok(y.into_vec())
}

/// Saved normalised values and inverse deviations for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: Tensor2,
    inv_std: Vec<f64>,
}

pub fn layer_norm_rows(x: &Tensor2, gain: &[f64], offset: &[f64]) -> (Tensor2, LayerNormCache) {
    let d = x.cols() as f64;
    let mut xhat = Tensor2::zeros(x.rows(), x.cols());
    let mut y = Tensor2::zeros(x.rows(), x.cols());
    let mut inv_std = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std.push(is);
        let xr = xhat.row_mut(r);
        for (o, v) in xr.iter_mut().zip(row) {
            *o = (v - mean) * is;
        }
        let yr = y.row_mut(r);
        for c in 0..row.len() {
            yr[c] = xhat.get(r, c) * gain[c] + offset[c];
        }
    }
    (y, LayerNormCache { xhat, inv_std })
}

/// Returns `dX`; accumulates gain/offset gradients.
pub fn layer_norm_rows_backward(
    cache: &LayerNormCache,
    gain: &[f64],
    dy: &Tensor2,
    dgain: &mut [f64],
    doffset: &mut [f64],
) -> Tensor2 {
    let (rows, cols) = dy.shape();
    let d = cols as f64;
    let mut dx = Tensor2::zeros(rows, cols);
    let mut dxhat = vec![0.0; cols];
    for r in 0..rows {
        let dyr = dy.row(r);
        let xh = cache.xhat.row(r);
        for c in 0..cols {
            dgain[c] += dyr[c] * xh[c];
            doffset[c] += dyr[c];
            dxhat[c] = dyr[c] * gain[c];
        }
        let mean_d = dxhat.iter().sum::<f64>() / d;
        let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d;
        let is = cache.inv_std[r];
        let out = dx.row_mut(r);
        for c in 0..cols {
            out[c] = is * (dxhat[c] - mean_d - xh[c] * mean_dx);
        }
    }
    dx
}

/// `(W_v x + b_v) ⊙ sigmoid(W_g x + b_g)`.
pub fn glu(x: &[f64], p_value: &LinearParams, p_gate: &LinearParams) -> Result<Vec<f64>> {
    if p_value.output_dim() != p_gate.output_dim() {
        return Err(Error::dim("glu branches", p_value.output_dim(), p_gate.output_dim()));
    }
    let v = linear(x, p_value)?;
    let g = linear(x, p_gate)?;
    Ok(v.iter().zip(&g).map(|(a, b)| a * sigmoid(*b)).collect())
}

/// Inverted-dropout mask: entries are 0 or `1 / (1 - rate)`.
#[derive(Debug, Clone)]
pub struct DropoutMask(Option<Tensor2>);

impl DropoutMask {
    pub fn identity() -> Self {
        DropoutMask(None)
    }

    pub fn apply(&self, x: &mut Tensor2) {
        if let Some(m) = &self.0 {
            for (v, s) in x.data_mut().iter_mut().zip(m.data()) {
                *v *= s;
            }
        }
    }
}

pub fn check_dropout_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    Ok(())
}

/// Samples a mask for an `rows x cols` activation. `None` rng means inference.
pub fn dropout_mask<R: Rng + ?Sized>(rows: usize, cols: usize, rate: f64, rng: Option<&mut R>) -> DropoutMask {
    match rng {
        Some(rng) if rate > 0.0 => {
            let keep = 1.0 / (1.0 - rate);
            let data = (0..rows * cols)
                .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
                .collect();
            DropoutMask(Some(Tensor2::from_vec(rows, cols, data).expect("mask shape")))
        }
        _ => DropoutMask(None),
    }
}

/// Dropout over a vector.
pub fn dropout<R: Rng + ?Sized>(x: &[f64], rate: f64, training: bool, rng: &mut R) -> Result<Vec<f64>> {
    check_dropout_rate(rate)?;
    let mut t = Tensor2::row_vector(x.to_vec());
    let mask = dropout_mask(1, x.len(), rate, training.then_some(rng));
    mask.apply(&mut t);
    Ok(t.into_vec())
}
