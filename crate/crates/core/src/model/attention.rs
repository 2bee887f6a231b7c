//! Multi-head scaled dot-product self-attention within each window.

use super::params::AttentionParams;
use crate::nn::ops::{softmax_backward, softmax_in_place};
use crate::nn::tensor::{dot, gemm, Tensor2, Trans};

pub struct AttentionCache {
    x: Tensor2,
    q: Tensor2,
    k: Tensor2,
    v: Tensor2,
    /// Weights stacked as `(B·m·T) x T`, row `(b*m + h)*T + query`.
    probs: Tensor2,
    mixed: Tensor2,
}

impl AttentionCache {
    pub fn weights(&self) -> &Tensor2 {
        &self.probs
    }
}

/// Attends within each of the `batch` windows of `x` (`(B·T) x d`).
pub fn attention_forward(p: &AttentionParams, x: &Tensor2, batch: usize, heads: usize) -> (Tensor2, AttentionCache) {
    let (rows, d) = x.shape();
    let t_len = rows / batch.max(1);
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut q = Tensor2::zeros(rows, d);
    let mut k = Tensor2::zeros(rows, d);
    let mut v = Tensor2::zeros(rows, d);
    gemm(1.0, x, Trans::N, &p.query, Trans::N, 0.0, &mut q);
    gemm(1.0, x, Trans::N, &p.key, Trans::N, 0.0, &mut k);
    gemm(1.0, x, Trans::N, &p.value, Trans::N, 0.0, &mut v);
    let mut probs = Tensor2::zeros(batch * heads * t_len, t_len);
    let mut mixed = Tensor2::zeros(rows, d);
    for b in 0..batch {
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            for i in 0..t_len {
                let pr = (b * heads + h) * t_len + i;
                let qi = &q.row(b * t_len + i)[cols.clone()];
                let row = probs.row_mut(pr);
                for j in 0..t_len {
                    row[j] = scale * dot(qi, &k.row(b * t_len + j)[cols.clone()]);
                }
                softmax_in_place(row);
                let mut acc = vec![0.0; dh];
                for j in 0..t_len {
                    let w = probs.get(pr, j);
                    for (a, vv) in acc.iter_mut().zip(&v.row(b * t_len + j)[cols.clone()]) {
                        *a += w * vv;
                    }
                }
                mixed.row_mut(b * t_len + i)[cols.clone()].copy_from_slice(&acc);
            }
        }
    }
    let mut out = Tensor2::zeros(rows, d);
    gemm(1.0, &mixed, Trans::N, &p.output, Trans::N, 0.0, &mut out);
    let cache = AttentionCache {
        x: x.clone(),
        q,
        k,
        v,
        probs,
        mixed,
    };
    (out, cache)
}

/// Returns `dx` and accumulates parameter gradients.
pub fn attention_backward(
    p: &AttentionParams,
    c: &AttentionCache,
    dout: &Tensor2,
    batch: usize,
    heads: usize,
    grad: &mut AttentionParams,
) -> Tensor2 {
    let (rows, d) = dout.shape();
    let t_len = rows / batch.max(1);
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    gemm(1.0, &c.mixed, Trans::T, dout, Trans::N, 1.0, &mut grad.output);
    let mut dmixed = Tensor2::zeros(rows, d);
    gemm(1.0, dout, Trans::N, &p.output, Trans::T, 0.0, &mut dmixed);
    let mut dq = Tensor2::zeros(rows, d);
    let mut dk = Tensor2::zeros(rows, d);
    let mut dv = Tensor2::zeros(rows, d);
    let mut dp = vec![0.0; t_len];
    let mut ds = vec![0.0; t_len];
    for b in 0..batch {
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            for i in 0..t_len {
                let pr = (b * heads + h) * t_len + i;
                let probs = c.probs.row(pr);
                let dmi = dmixed.row(b * t_len + i)[cols.clone()].to_vec();
                for j in 0..t_len {
                    dp[j] = dot(&dmi, &c.v.row(b * t_len + j)[cols.clone()]);
                    let w = probs[j];
                    for (g, m) in dv.row_mut(b * t_len + j)[cols.clone()].iter_mut().zip(&dmi) {
                        *g += w * m;
                    }
                }
                softmax_backward(probs, &dp, &mut ds);
                let qi = c.q.row(b * t_len + i)[cols.clone()].to_vec();
                for j in 0..t_len {
                    let s = ds[j] * scale;
                    if s == 0.0 {
                        continue;
                    }
                    let kj = c.k.row(b * t_len + j)[cols.clone()].to_vec();
                    for (g, kv) in dq.row_mut(b * t_len + i)[cols.clone()].iter_mut().zip(&kj) {
                        *g += s * kv;
                    }
                    for (g, qv) in dk.row_mut(b * t_len + j)[cols.clone()].iter_mut().zip(&qi) {
                        *g += s * qv;
                    }
                }
            }
        }
    }
    gemm(1.0, &c.x, Trans::T, &dq, Trans::N, 1.0, &mut grad.query);
    gemm(1.0, &c.x, Trans::T, &dk, Trans::N, 1.0, &mut grad.key);
    gemm(1.0, &c.x, Trans::T, &dv, Trans::N, 1.0, &mut grad.value);
    let mut dx = Tensor2::zeros(rows, d);
    gemm(1.0, &dq, Trans::N, &p.query, Trans::T, 0.0, &mut dx);
    gemm(1.0, &dk, Trans::N, &p.key, Trans::T, 1.0, &mut dx);
    gemm(1.0, &dv, Trans::N, &p.value, Trans::T, 1.0, &mut dx);
    dx
}

/// Self-attention over one window `x` (`T x d`).
pub fn self_attend(x: &Tensor2, p: &AttentionParams, heads: usize) -> crate::Result<Tensor2> {
    let d = p.query.rows();
    if x.cols() != d || heads == 0 || d % heads != 0 {
        return Err(crate::Error::dim("self_attend", format!("d={d} divisible by heads"), x.cols()));
    }
    Ok(attention_forward(p, x, 1, heads).0)
}
