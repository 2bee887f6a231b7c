//! Gated residual network over stacked rows.

use super::params::GrnParams;
use crate::nn::ops::{
    elu, elu_grad, layer_norm_rows, layer_norm_rows_backward, linear_rows, linear_rows_backward, sigmoid, DropoutMask,
    LayerNormCache,
};
use crate::nn::tensor::{gemm, Tensor2, Trans};

pub struct GrnCache {
    x: Tensor2,
    y: Option<Tensor2>,
    pre: Tensor2,
    act: Tensor2,
    hidden: Tensor2,
    mask: DropoutMask,
    value: Tensor2,
    gate: Tensor2,
    ln: LayerNormCache,
}

/// `LayerNorm(x + GLU(W1 ELU(W2 x + W3 y + b2) + b1))`; `y = None` means a
/// zero secondary input. `mask` is applied to the GLU input.
pub fn grn_forward(p: &GrnParams, x: &Tensor2, y: Option<&Tensor2>, mask: DropoutMask) -> (Tensor2, GrnCache) {
    let mut pre = linear_rows(x, &p.primary);
    if let Some(y) = y {
        gemm(1.0, y, Trans::N, &p.secondary, Trans::T, 1.0, &mut pre);
    }
    let act = pre.map(elu);
    let mut hidden = linear_rows(&act, &p.hidden);
    mask.apply(&mut hidden);
    let value = linear_rows(&hidden, &p.value);
    let gate = linear_rows(&hidden, &p.gate).map(sigmoid);
    let mut sum = x.clone();
    for ((s, v), g) in sum.data_mut().iter_mut().zip(value.data()).zip(gate.data()) {
        *s += v * g;
    }
    let (out, ln) = layer_norm_rows(&sum, p.ln_gain.data(), p.ln_offset.data());
    let cache = GrnCache {
        x: x.clone(),
        y: y.cloned(),
        pre,
        act,
        hidden,
        mask,
        value,
        gate,
        ln,
    };
    (out, cache)
}

/// Returns `(dx, dy)`; `dy` is `None` when the forward pass had no secondary input.
pub fn grn_backward(p: &GrnParams, c: &GrnCache, dout: &Tensor2, grad: &mut GrnParams) -> (Tensor2, Option<Tensor2>) {
    let dsum = layer_norm_rows_backward(&c.ln, p.ln_gain.data(), dout, grad.ln_gain.data_mut(), grad.ln_offset.data_mut());
    let mut dvalue = Tensor2::zeros(dsum.rows(), dsum.cols());
    let mut dgate = Tensor2::zeros(dsum.rows(), dsum.cols());
    for i in 0..dsum.len() {
        let (ds, v, g) = (dsum.data()[i], c.value.data()[i], c.gate.data()[i]);
        dvalue.data_mut()[i] = ds * g;
        dgate.data_mut()[i] = ds * v * g * (1.0 - g);
    }
    let mut dhidden = linear_rows_backward(&c.hidden, &p.value, &dvalue, &mut grad.value);
    dhidden.add_assign(&linear_rows_backward(&c.hidden, &p.gate, &dgate, &mut grad.gate));
    c.mask.apply(&mut dhidden);
    let mut dpre = linear_rows_backward(&c.act, &p.hidden, &dhidden, &mut grad.hidden);
    for (g, &z) in dpre.data_mut().iter_mut().zip(c.pre.data()) {
        *g *= elu_grad(z);
    }
    let mut dx = linear_rows_backward(&c.x, &p.primary, &dpre, &mut grad.primary);
    dx.add_assign(&dsum);
    let dy = c.y.as_ref().map(|y| {
        gemm(1.0, &dpre, Trans::T, y, Trans::N, 1.0, &mut grad.secondary);
        let mut dy = Tensor2::zeros(y.rows(), y.cols());
        gemm(1.0, &dpre, Trans::N, &p.secondary, Trans::N, 0.0, &mut dy);
        dy
    });
    (dx, dy)
}

/// Fusion of one pair of `d`-vectors at inference.
pub fn fuse(h_r: &[f64], h_a: &[f64], p: &GrnParams) -> crate::Result<Vec<f64>> {
    let d = p.ln_gain.len();
    if h_r.len() != d || h_a.len() != d {
        return Err(crate::Error::dim("fuse inputs", d, h_r.len().max(h_a.len())));
    }
    let x = Tensor2::row_vector(h_r.to_vec());
    let y = Tensor2::row_vector(h_a.to_vec());
    Ok(grn_forward(p, &x, Some(&y), DropoutMask::identity()).0.into_vec())
}
