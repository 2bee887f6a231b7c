//! Per-modality encoders over a batch of windows stacked as `(B·T) x k`
//! (row `b*T + t`).

use super::params::{AttnLstmParams, EncoderParams};
use crate::error::{Error, Result};
use crate::nn::ops::{linear_rows, linear_rows_backward_params, sigmoid, softmax_backward, softmax_in_place};
use crate::nn::tensor::{dot, gemm, Tensor2, Trans};

struct Step {
    h_prev: Tensor2,
    c_prev: Tensor2,
    ph: Tensor2,
    z: Tensor2,
    alpha: Tensor2,
    xhat: Tensor2,
    /// Activated gates `[i, f, g, o]`.
    gates: Tensor2,
    tanh_c: Tensor2,
}

pub struct AttnLstmCache {
    x: Tensor2,
    xs: Tensor2,
    steps: Vec<Step>,
}

pub enum EncoderCache {
    AttnLstm(AttnLstmCache),
    Positional(Tensor2),
}

impl EncoderCache {
    /// Input-attention weights of every step as `(B·T) x k`, if any.
    pub fn input_attention(&self, batch: usize) -> Option<Tensor2> {
        let EncoderCache::AttnLstm(c) = self else {
            return None;
        };
        let t_len = c.steps.len();
        let k = c.x.cols();
        let mut out = Tensor2::zeros(batch * t_len, k);
        for (t, s) in c.steps.iter().enumerate() {
            for b in 0..batch {
                out.row_mut(b * t_len + t).copy_from_slice(s.alpha.row(b));
            }
        }
        Some(out)
    }
}

/// `(B·k) x T` with row `b*k + j` holding feature `j`'s series in window `b`.
fn series_by_feature(x: &Tensor2, batch: usize, t_len: usize) -> Tensor2 {
    let k = x.cols();
    let mut xs = Tensor2::zeros(batch * k, t_len);
    for b in 0..batch {
        for t in 0..t_len {
            let row = x.row(b * t_len + t);
            for j in 0..k {
                xs.set(b * k + j, t, row[j]);
            }
        }
    }
    xs
}

/// Attention over features for every window given the previous hidden
/// states `h` (`B x d`) and `ux = Xs U_eᵀ`. Returns `(P h, z, alpha)`.
fn attend(p: &AttnLstmParams, h: &Tensor2, ux: &Tensor2, k: usize) -> (Tensor2, Tensor2, Tensor2) {
    let batch = h.rows();
    let t_len = p.w_e.rows();
    let mut ph = Tensor2::zeros(batch, t_len);
    gemm(1.0, h, Trans::N, &p.proj, Trans::T, 0.0, &mut ph);
    let mut q = Tensor2::zeros(batch, t_len);
    gemm(1.0, &ph, Trans::N, &p.w_e, Trans::T, 0.0, &mut q);
    q.add_row_broadcast(p.b_e.data());
    let mut z = Tensor2::zeros(batch * k, t_len);
    let mut alpha = Tensor2::zeros(batch, k);
    for b in 0..batch {
        let qb = q.row(b).to_vec();
        for j in 0..k {
            let r = b * k + j;
            let uxr = ux.row(r).to_vec();
            let zr = z.row_mut(r);
            for i in 0..t_len {
                zr[i] = (qb[i] + uxr[i]).tanh();
            }
            let e = dot(p.v_e.data(), z.row(r));
            alpha.set(b, j, e);
        }
        softmax_in_place(alpha.row_mut(b));
    }
    (ph, z, alpha)
}

fn check_attn_lstm(p: &AttnLstmParams, x: &Tensor2, batch: usize, t_len: usize) -> Result<()> {
    if x.rows() != batch * t_len {
        return Err(Error::dim("encoder input rows", batch * t_len, x.rows()));
    }
    if p.w_x.cols() != x.cols() {
        return Err(Error::dim("encoder input features", p.w_x.cols(), x.cols()));
    }
    if p.w_e.rows() != t_len {
        return Err(Error::dim("encoder window", p.w_e.rows(), t_len));
    }
    Ok(())
}

fn attn_lstm_forward(p: &AttnLstmParams, x: &Tensor2, batch: usize, t_len: usize) -> (Tensor2, AttnLstmCache) {
    let k = x.cols();
    let d = p.w_h.cols();
    let xs = series_by_feature(x, batch, t_len);
    let mut ux = Tensor2::zeros(batch * k, t_len);
    gemm(1.0, &xs, Trans::N, &p.u_e, Trans::T, 0.0, &mut ux);

    let mut h = Tensor2::zeros(batch, d);
    let mut c = Tensor2::zeros(batch, d);
    let mut out = Tensor2::zeros(batch * t_len, d);
    let mut steps = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let (ph, z, alpha) = attend(p, &h, &ux, k);
        let mut xhat = Tensor2::zeros(batch, k);
        for b in 0..batch {
            let xr = x.row(b * t_len + t);
            for (j, v) in xhat.row_mut(b).iter_mut().enumerate() {
                *v = alpha.get(b, j) * xr[j];
            }
        }
        let mut gates = Tensor2::zeros(batch, 4 * d);
        gemm(1.0, &xhat, Trans::N, &p.w_x, Trans::T, 0.0, &mut gates);
        gemm(1.0, &h, Trans::N, &p.w_h, Trans::T, 1.0, &mut gates);
        gates.add_row_broadcast(p.bias.data());
        let mut c_new = Tensor2::zeros(batch, d);
        let mut h_new = Tensor2::zeros(batch, d);
        let mut tanh_c = Tensor2::zeros(batch, d);
        for b in 0..batch {
            let g = gates.row_mut(b);
            for u in 0..d {
                g[u] = sigmoid(g[u]);
                g[d + u] = sigmoid(g[d + u]);
                g[2 * d + u] = g[2 * d + u].tanh();
                g[3 * d + u] = sigmoid(g[3 * d + u]);
            }
            let g = gates.row(b);
            let cp = c.row(b);
            for u in 0..d {
                let cn = g[d + u] * cp[u] + g[u] * g[2 * d + u];
                let tc = cn.tanh();
                c_new.set(b, u, cn);
                tanh_c.set(b, u, tc);
                h_new.set(b, u, g[3 * d + u] * tc);
            }
            out.row_mut(b * t_len + t).copy_from_slice(h_new.row(b));
        }
        steps.push(Step {
            h_prev: std::mem::replace(&mut h, h_new),
            c_prev: std::mem::replace(&mut c, c_new),
            ph,
            z,
            alpha,
            xhat,
            gates,
            tanh_c,
        });
    }
    (out, AttnLstmCache { x: x.clone(), xs, steps })
}

fn attn_lstm_backward(p: &AttnLstmParams, cache: &AttnLstmCache, dout: &Tensor2, grad: &mut AttnLstmParams) {
    let t_len = cache.steps.len();
    let batch = dout.rows() / t_len.max(1);
    let d = p.w_h.cols();
    let k = cache.x.cols();
    let mut dh_next = Tensor2::zeros(batch, d);
    let mut dc_next = Tensor2::zeros(batch, d);
    let mut dux = Tensor2::zeros(batch * k, t_len);
    let mut dgates = Tensor2::zeros(batch, 4 * d);
    for t in (0..t_len).rev() {
        let s = &cache.steps[t];
        let mut dc_prev = Tensor2::zeros(batch, d);
        for b in 0..batch {
            let g = s.gates.row(b);
            let tc = s.tanh_c.row(b);
            let cp = s.c_prev.row(b);
            let dhr = dout.row(b * t_len + t);
            let dhn = dh_next.row(b);
            let dcn = dc_next.row(b);
            let dg = dgates.row_mut(b);
            for u in 0..d {
                let (i, f, gg, o) = (g[u], g[d + u], g[2 * d + u], g[3 * d + u]);
                let dh = dhr[u] + dhn[u];
                let dc = dh * o * (1.0 - tc[u] * tc[u]) + dcn[u];
                dg[u] = dc * gg * i * (1.0 - i);
                dg[d + u] = dc * cp[u] * f * (1.0 - f);
                dg[2 * d + u] = dc * i * (1.0 - gg * gg);
                dg[3 * d + u] = dh * tc[u] * o * (1.0 - o);
                dc_prev.set(b, u, dc * f);
            }
        }
        gemm(1.0, &dgates, Trans::T, &s.xhat, Trans::N, 1.0, &mut grad.w_x);
        gemm(1.0, &dgates, Trans::T, &s.h_prev, Trans::N, 1.0, &mut grad.w_h);
        dgates.sum_rows_into(grad.bias.data_mut());
        let mut dxhat = Tensor2::zeros(batch, k);
        gemm(1.0, &dgates, Trans::N, &p.w_x, Trans::N, 0.0, &mut dxhat);
        let mut dh_prev = Tensor2::zeros(batch, d);
        gemm(1.0, &dgates, Trans::N, &p.w_h, Trans::N, 0.0, &mut dh_prev);

        // back through the feature attention
        let mut dq = Tensor2::zeros(batch, t_len);
        let mut dalpha = vec![0.0; k];
        let mut de = vec![0.0; k];
        for b in 0..batch {
            let xr = cache.x.row(b * t_len + t);
            for j in 0..k {
                dalpha[j] = dxhat.get(b, j) * xr[j];
            }
            softmax_backward(s.alpha.row(b), &dalpha, &mut de);
            for j in 0..k {
                let r = b * k + j;
                let zr = s.z.row(r);
                let dv = grad.v_e.data_mut();
                for i in 0..t_len {
                    dv[i] += de[j] * zr[i];
                }
                let dq_row = dq.row_mut(b);
                let duxr = dux.row_mut(r);
                for i in 0..t_len {
                    let da = de[j] * p.v_e.data()[i] * (1.0 - zr[i] * zr[i]);
                    dq_row[i] += da;
                    duxr[i] += da;
                }
            }
        }
        gemm(1.0, &dq, Trans::T, &s.ph, Trans::N, 1.0, &mut grad.w_e);
        dq.sum_rows_into(grad.b_e.data_mut());
        let mut dph = Tensor2::zeros(batch, t_len);
        gemm(1.0, &dq, Trans::N, &p.w_e, Trans::N, 0.0, &mut dph);
        gemm(1.0, &dph, Trans::T, &s.h_prev, Trans::N, 1.0, &mut grad.proj);
        gemm(1.0, &dph, Trans::N, &p.proj, Trans::N, 1.0, &mut dh_prev);
        dh_next = dh_prev;
        dc_next = dc_prev;
    }
    gemm(1.0, &dux, Trans::T, &cache.xs, Trans::N, 1.0, &mut grad.u_e);
}

/// Sinusoidal position code for step `t`, width `d`.
pub fn positional_encoding(t_len: usize, d: usize) -> Tensor2 {
    let mut pe = Tensor2::zeros(t_len, d);
    for t in 0..t_len {
        for i in 0..d {
            let pair = (i / 2 * 2) as f64;
            let angle = t as f64 / 10_000f64.powf(pair / d as f64);
            pe.set(t, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    pe
}

/// Encodes `B` stacked windows into `(B·T) x d` hidden states.
pub fn encode(p: &EncoderParams, x: &Tensor2, batch: usize, t_len: usize) -> Result<(Tensor2, EncoderCache)> {
    match p {
        EncoderParams::AttnLstm(p) => {
            check_attn_lstm(p, x, batch, t_len)?;
            let (h, cache) = attn_lstm_forward(p, x, batch, t_len);
            Ok((h, EncoderCache::AttnLstm(cache)))
        }
        EncoderParams::Positional(lin) => {
            if x.rows() != batch * t_len || x.cols() != lin.input_dim() {
                return Err(Error::dim(
                    "encoder input",
                    format!("{}x{}", batch * t_len, lin.input_dim()),
                    format!("{}x{}", x.rows(), x.cols()),
                ));
            }
            let mut h = linear_rows(x, lin);
            let pe = positional_encoding(t_len, lin.output_dim());
            for b in 0..batch {
                for t in 0..t_len {
                    for (v, e) in h.row_mut(b * t_len + t).iter_mut().zip(pe.row(t)) {
                        *v += e;
                    }
                }
            }
            Ok((h, EncoderCache::Positional(x.clone())))
        }
    }
}

/// Accumulates parameter gradients given `dL/dH`.
pub fn encode_backward(p: &EncoderParams, cache: &EncoderCache, dh: &Tensor2, grad: &mut EncoderParams) {
    match (p, cache, grad) {
        (EncoderParams::AttnLstm(p), EncoderCache::AttnLstm(c), EncoderParams::AttnLstm(g)) => {
            attn_lstm_backward(p, c, dh, g)
        }
        (EncoderParams::Positional(_), EncoderCache::Positional(x), EncoderParams::Positional(g)) => {
            linear_rows_backward_params(x, dh, g)
        }
        _ => panic!("encoder parameter, cache and gradient kinds differ"),
    }
}

/// Input-attention weights for one window `x` (`T x k`) given `h_prev`.
pub fn input_attention(h_prev: &[f64], x: &Tensor2, p: &AttnLstmParams) -> Result<Vec<f64>> {
    check_attn_lstm(p, x, 1, p.w_e.rows())?;
    if h_prev.len() != p.proj.cols() {
        return Err(Error::dim("input attention state", p.proj.cols(), h_prev.len()));
    }
    let xs = series_by_feature(x, 1, x.rows());
    let mut ux = Tensor2::zeros(x.cols(), x.rows());
    gemm(1.0, &xs, Trans::N, &p.u_e, Trans::T, 0.0, &mut ux);
    let h = Tensor2::row_vector(h_prev.to_vec());
    let (_, _, alpha) = attend(p, &h, &ux, x.cols());
    Ok(alpha.into_vec())
}

/// Hidden states `T x d` of one window.
pub fn attn_lstm_encode(x: &Tensor2, p: &AttnLstmParams) -> Result<Tensor2> {
    check_attn_lstm(p, x, 1, x.rows())?;
    Ok(attn_lstm_forward(p, x, 1, x.rows()).0)
}
