//! Whole-network forward and backward passes over a batch of windows.

use rand::Rng;

use super::attention::{attention_backward, attention_forward, AttentionCache};
use super::config::ModelConfig;
use super::encoder::{encode, encode_backward, EncoderCache};
use super::grn::{grn_backward, grn_forward, GrnCache};
use super::params::{FusionParams, HeadParams, ModelParams};
use crate::dataio::Sample;
use crate::error::{Error, Result};
use crate::nn::ops::{
    dropout_mask, layer_norm_rows, layer_norm_rows_backward, linear_rows, linear_rows_backward, mish, mish_grad,
    DropoutMask, LayerNormCache,
};
use crate::nn::Tensor2;

/// Windows stacked row-wise: row `b*T + t` is step `t` of window `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub rssi: Tensor2,
    pub accel: Tensor2,
    pub size: usize,
}

impl Batch {
    pub fn from_samples(samples: &[&Sample], cfg: &ModelConfig) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let t = cfg.window;
        let mut rssi = Tensor2::zeros(samples.len() * t, cfg.rssi_features);
        let mut accel = Tensor2::zeros(samples.len() * t, cfg.accel_features);
        for (b, s) in samples.iter().enumerate() {
            if s.rssi.shape() != (t, cfg.rssi_features) || s.accel.shape() != (t, cfg.accel_features) {
                return Err(Error::dim(
                    "sample",
                    format!("{t}x{} and {t}x{}", cfg.rssi_features, cfg.accel_features),
                    format!(
                        "{}x{} and {}x{}",
                        s.rssi.rows(),
                        s.rssi.cols(),
                        s.accel.rows(),
                        s.accel.cols()
                    ),
                ));
            }
            for i in 0..t {
                rssi.row_mut(b * t + i).copy_from_slice(s.rssi.row(i));
                accel.row_mut(b * t + i).copy_from_slice(s.accel.row(i));
            }
        }
        Ok(Self {
            rssi,
            accel,
            size: samples.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// Input-attention weights per step, `(B·T) x r`.
    pub rssi_attention: Option<Tensor2>,
    /// `(B·T) x a`.
    pub accel_attention: Option<Tensor2>,
    /// Self-attention weights, `(B·m·T) x T` with row `(b*m + h)*T + query`.
    pub self_attention: Option<Tensor2>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// `(B·T) x n` room scores.
    pub emissions: Tensor2,
    /// `(B·T) x r` reconstruction of the normalised RSSI input.
    pub backcast: Tensor2,
}

impl ForwardOutput {
    /// Rows of window `b`.
    pub fn window(&self, b: usize, t_len: usize) -> (Tensor2, Tensor2) {
        let take = |m: &Tensor2| {
            let rows: Vec<&[f64]> = (0..t_len).map(|i| m.row(b * t_len + i)).collect();
            Tensor2::from_rows(&rows).expect("window rows")
        };
        (take(&self.emissions), take(&self.backcast))
    }
}

enum FusionCache {
    Grn(GrnCache),
    Concat(Tensor2),
}

struct HeadCache {
    ln: LayerNormCache,
    z: Tensor2,
    pre_mlp: Tensor2,
    act_mlp: Tensor2,
    out: Tensor2,
    grn: GrnCache,
    grn_out: Tensor2,
}

pub struct ForwardCache {
    batch: usize,
    rssi: EncoderCache,
    rssi_mask: DropoutMask,
    accel: Option<(EncoderCache, DropoutMask)>,
    fusion: FusionCache,
    attention: Option<(AttentionCache, DropoutMask)>,
    head: HeadCache,
}

impl ForwardCache {
    pub fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            rssi_attention: self.rssi.input_attention(self.batch),
            accel_attention: self.accel.as_ref().and_then(|(c, _)| c.input_attention(self.batch)),
            self_attention: self.attention.as_ref().map(|(c, _)| c.weights().clone()),
        }
    }
}

fn mask<R: Rng + ?Sized>(rows: usize, cols: usize, rate: f64, rng: &mut Option<&mut R>) -> DropoutMask {
    dropout_mask(rows, cols, rate, rng.as_deref_mut())
}

fn head_forward<R: Rng + ?Sized>(
    p: &HeadParams,
    u: &Tensor2,
    rate: f64,
    rng: &mut Option<&mut R>,
) -> (Tensor2, Tensor2, HeadCache) {
    let (z, ln) = layer_norm_rows(u, p.ln_gain.data(), p.ln_offset.data());
    let pre_mlp = linear_rows(&z, &p.expand);
    let act_mlp = pre_mlp.map(mish);
    let mut out = linear_rows(&act_mlp, &p.contract);
    for (o, zv) in out.data_mut().iter_mut().zip(z.data()) {
        *o = (*o + zv).tanh();
    }
    let emissions = linear_rows(&out, &p.emission);
    let grn_mask = mask(out.rows(), out.cols(), rate, rng);
    let (grn_out, grn) = grn_forward(&p.backcast_grn, &out, Some(&out), grn_mask);
    let backcast = linear_rows(&grn_out, &p.backcast);
    let cache = HeadCache {
        ln,
        z,
        pre_mlp,
        act_mlp,
        out,
        grn,
        grn_out,
    };
    (emissions, backcast, cache)
}

/// Returns `dL/du` for the head input `u = Ĥ + H̃`.
fn head_backward(p: &HeadParams, c: &HeadCache, demit: &Tensor2, dback: &Tensor2, g: &mut HeadParams) -> Tensor2 {
    let mut dout = linear_rows_backward(&c.out, &p.emission, demit, &mut g.emission);
    let dgrn = linear_rows_backward(&c.grn_out, &p.backcast, dback, &mut g.backcast);
    let (dx, dy) = grn_backward(&p.backcast_grn, &c.grn, &dgrn, &mut g.backcast_grn);
    dout.add_assign(&dx);
    if let Some(dy) = dy {
        dout.add_assign(&dy);
    }
    for (d, o) in dout.data_mut().iter_mut().zip(c.out.data()) {
        *d *= 1.0 - o * o;
    }
    let mut dact = linear_rows_backward(&c.act_mlp, &p.contract, &dout, &mut g.contract);
    for (d, &x) in dact.data_mut().iter_mut().zip(c.pre_mlp.data()) {
        *d *= mish_grad(x);
    }
    let mut dz = linear_rows_backward(&c.z, &p.expand, &dact, &mut g.expand);
    dz.add_assign(&dout);
    layer_norm_rows_backward(&c.ln, p.ln_gain.data(), &dz, g.ln_gain.data_mut(), g.ln_offset.data_mut())
}

/// Runs the network. With `rng` set, dropout masks are drawn from it in a
/// fixed order; without it the pass is deterministic inference.
pub fn forward_batch<R: Rng + ?Sized>(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &Batch,
    rng: Option<&mut R>,
) -> Result<(ForwardOutput, ForwardCache)> {
    let mut rng = rng;
    let (t, d, rate) = (cfg.window, cfg.d_model, cfg.dropout);
    let rows = batch.size * t;
    let (mut h_r, rssi) = encode(&params.rssi, &batch.rssi, batch.size, t)?;
    let rssi_mask = mask(rows, d, rate, &mut rng);
    rssi_mask.apply(&mut h_r);
    let accel = match &params.accel {
        Some(p) => {
            let (mut h_a, c) = encode(p, &batch.accel, batch.size, t)?;
            let m = mask(rows, d, rate, &mut rng);
            m.apply(&mut h_a);
            Some((h_a, c, m))
        }
        None => None,
    };
    let (fused, fusion) = match &params.fusion {
        FusionParams::Grn(p) => {
            let m = mask(rows, d, rate, &mut rng);
            let (out, c) = grn_forward(p, &h_r, accel.as_ref().map(|a| &a.0), m);
            (out, FusionCache::Grn(c))
        }
        FusionParams::Concat(p) => {
            let h_a = accel.as_ref().map_or_else(|| Tensor2::zeros(rows, d), |a| a.0.clone());
            let cat = h_r.hcat(&h_a);
            (linear_rows(&cat, p), FusionCache::Concat(cat))
        }
    };
    let (u, attention) = match &params.attention {
        Some(p) => {
            let (mut att, c) = attention_forward(p, &fused, batch.size, cfg.heads);
            let m = mask(rows, d, rate, &mut rng);
            m.apply(&mut att);
            (fused.add(&att), Some((c, m)))
        }
        None => (fused.add(&fused), None),
    };
    let (emissions, backcast, head) = head_forward(&params.head, &u, rate, &mut rng);
    let cache = ForwardCache {
        batch: batch.size,
        rssi,
        rssi_mask,
        accel: accel.map(|(_, c, m)| (c, m)),
        fusion,
        attention,
        head,
    };
    Ok((ForwardOutput { emissions, backcast }, cache))
}

/// Accumulates `dL/dθ` into `grad` given output gradients.
pub fn backward_batch(
    params: &ModelParams,
    cfg: &ModelConfig,
    cache: &ForwardCache,
    d_emissions: &Tensor2,
    d_backcast: &Tensor2,
    grad: &mut ModelParams,
) {
    let du = head_backward(&params.head, &cache.head, d_emissions, d_backcast, &mut grad.head);
    let mut dfused = du.clone();
    match (&params.attention, &cache.attention, &mut grad.attention) {
        (Some(p), Some((c, m)), Some(g)) => {
            let mut datt = du;
            m.apply(&mut datt);
            dfused.add_assign(&attention_backward(p, c, &datt, cache.batch, cfg.heads, g));
        }
        _ => dfused.add_assign(&du),
    }
    let d = cfg.d_model;
    let (mut dh_r, dh_a) = match (&params.fusion, &cache.fusion, &mut grad.fusion) {
        (FusionParams::Grn(p), FusionCache::Grn(c), FusionParams::Grn(g)) => grn_backward(p, c, &dfused, g),
        (FusionParams::Concat(p), FusionCache::Concat(cat), FusionParams::Concat(g)) => {
            let dcat = linear_rows_backward(cat, p, &dfused, g);
            (dcat.columns(0, d), Some(dcat.columns(d, d)))
        }
        _ => panic!("fusion parameter, cache and gradient kinds differ"),
    };
    cache.rssi_mask.apply(&mut dh_r);
    encode_backward(&params.rssi, &cache.rssi, &dh_r, &mut grad.rssi);
    if let (Some(p), Some((c, m)), Some(g), Some(mut dh_a)) = (&params.accel, &cache.accel, &mut grad.accel, dh_a) {
        m.apply(&mut dh_a);
        encode_backward(p, c, &dh_a, g);
    }
}

/// Single-window forward returning outputs and attention diagnostics.
pub fn forward<R: Rng + ?Sized>(
    sample: &Sample,
    params: &ModelParams,
    cfg: &ModelConfig,
    rng: Option<&mut R>,
) -> Result<(ForwardOutput, Diagnostics)> {
    let batch = Batch::from_samples(&[sample], cfg)?;
    let (out, cache) = forward_batch(params, cfg, &batch, rng)?;
    Ok((out, cache.diagnostics()))
}

/// `tanh(LN(ĥ + h̃) + MLP(LN(ĥ + h̃)))` for one step.
pub fn nonlinear_map(h_hat: &[f64], h_tilde: &[f64], p: &HeadParams) -> Result<Vec<f64>> {
    let d = p.ln_gain.len();
    if h_hat.len() != d || h_tilde.len() != d {
        return Err(Error::dim("nonlinear_map inputs", d, h_hat.len().max(h_tilde.len())));
    }
    let u = Tensor2::row_vector(h_hat.iter().zip(h_tilde).map(|(a, b)| a + b).collect());
    let (_, _, cache) = head_forward::<rand_chacha::ChaCha8Rng>(p, &u, 0.0, &mut None);
    Ok(cache.out.into_vec())
}
