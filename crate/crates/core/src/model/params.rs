use rand::Rng;

use super::config::{ModelConfig, Variant};
use crate::crf::TransitionMatrix;
use crate::nn::init::{linear_params, uniform_fan_in};
use crate::nn::{LinearParams, Tensor2};

/// Uniform access to every learnable tensor under a dotted name.
pub trait Visit {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor2)>);
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor2)>);
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl Visit for Tensor2 {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor2)>) {
        out.push((prefix.to_string(), self));
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor2)>) {
        out.push((prefix.to_string(), self));
    }
}

impl<T: Visit> Visit for Option<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor2)>) {
        if let Some(v) = self {
            v.visit(prefix, out);
        }
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor2)>) {
        if let Some(v) = self {
            v.visit_mut(prefix, out);
        }
    }
}

macro_rules! visit_fields {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl Visit for $ty {
            fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor2)>) {
                $( self.$field.visit(&join(prefix, stringify!($field)), out); )*
            }
            fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor2)>) {
                $( self.$field.visit_mut(&join(prefix, stringify!($field)), out); )*
            }
        }
    };
}

visit_fields!(LinearParams { weight, bias });
visit_fields!(TransitionMatrix { scores, start });

/// Input-attention LSTM for one modality with `k` features.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnLstmParams {
    /// Maps the `d`-dim hidden state into the `T`-dim attention space.
    pub proj: Tensor2,
    pub w_e: Tensor2,
    pub u_e: Tensor2,
    pub b_e: Tensor2,
    pub v_e: Tensor2,
    /// Gate weights in order input, forget, cell, output: `4d x k`.
    pub w_x: Tensor2,
    pub w_h: Tensor2,
    pub bias: Tensor2,
}
visit_fields!(AttnLstmParams { proj, w_e, u_e, b_e, v_e, w_x, w_h, bias });

#[derive(Debug, Clone, PartialEq)]
pub enum EncoderParams {
    AttnLstm(AttnLstmParams),
    /// Positional encoding plus a per-step linear map.
    Positional(LinearParams),
}

impl Visit for EncoderParams {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor2)>) {
        match self {
            EncoderParams::AttnLstm(p) => p.visit(&join(prefix, "lstm"), out),
            EncoderParams::Positional(p) => p.visit(&join(prefix, "embed"), out),
        }
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor2)>) {
        match self {
            EncoderParams::AttnLstm(p) => p.visit_mut(&join(prefix, "lstm"), out),
            EncoderParams::Positional(p) => p.visit_mut(&join(prefix, "embed"), out),
        }
    }
}

/// Gated residual network `LayerNorm(x + GLU(W1 ELU(W2 x + W3 y + b2) + b1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrnParams {
    /// `W2`, `b2` on the primary input.
    pub primary: LinearParams,
    /// `W3` on the secondary input, no bias.
    pub secondary: Tensor2,
    /// `W1`, `b1`.
    pub hidden: LinearParams,
    pub value: LinearParams,
    pub gate: LinearParams,
    pub ln_gain: Tensor2,
    pub ln_offset: Tensor2,
}
visit_fields!(GrnParams { primary, secondary, hidden, value, gate, ln_gain, ln_offset });

#[derive(Debug, Clone, PartialEq)]
pub enum FusionParams {
    Grn(GrnParams),
    /// `[h_r, h_a] -> d`.
    Concat(LinearParams),
}

impl Visit for FusionParams {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor2)>) {
        match self {
            FusionParams::Grn(p) => p.visit(&join(prefix, "grn"), out),
            FusionParams::Concat(p) => p.visit(&join(prefix, "concat"), out),
        }
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor2)>) {
        match self {
            FusionParams::Grn(p) => p.visit_mut(&join(prefix, "grn"), out),
            FusionParams::Concat(p) => p.visit_mut(&join(prefix, "concat"), out),
        }
    }
}

/// Multi-head self-attention. Head `h` uses columns `h*d/m..(h+1)*d/m` of
/// the query, key and value maps; inputs are right-multiplied.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub query: Tensor2,
    pub key: Tensor2,
    pub value: Tensor2,
    pub output: Tensor2,
}
visit_fields!(AttentionParams { query, key, value, output });

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub ln_gain: Tensor2,
    pub ln_offset: Tensor2,
    /// `d -> 4d`.
    pub expand: LinearParams,
    /// `4d -> d`.
    pub contract: LinearParams,
    pub emission: LinearParams,
    pub backcast_grn: GrnParams,
    pub backcast: LinearParams,
}
visit_fields!(HeadParams { ln_gain, ln_offset, expand, contract, emission, backcast_grn, backcast });

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub rssi: EncoderParams,
    pub accel: Option<EncoderParams>,
    pub fusion: FusionParams,
    pub attention: Option<AttentionParams>,
    pub head: HeadParams,
    pub crf: Option<TransitionMatrix>,
}
visit_fields!(ModelParams { rssi, accel, fusion, attention, head, crf });

fn encoder<R: Rng + ?Sized>(cfg: &ModelConfig, k: usize, rng: &mut R) -> EncoderParams {
    let (d, t) = (cfg.d_model, cfg.window);
    if cfg.variant == Variant::NoLstm {
        return EncoderParams::Positional(linear_params(k, d, rng));
    }
    let mut bias = Tensor2::zeros(1, 4 * d);
    // forget-gate bias of one keeps early gradients flowing through the cell
    bias.data_mut()[d..2 * d].fill(1.0);
    EncoderParams::AttnLstm(AttnLstmParams {
        proj: uniform_fan_in(t, d, d, rng),
        w_e: uniform_fan_in(t, t, t, rng),
        u_e: uniform_fan_in(t, t, t, rng),
        b_e: Tensor2::zeros(1, t),
        v_e: uniform_fan_in(1, t, t, rng),
        w_x: uniform_fan_in(4 * d, k, d, rng),
        w_h: uniform_fan_in(4 * d, d, d, rng),
        bias,
    })
}

fn grn<R: Rng + ?Sized>(d: usize, rng: &mut R) -> GrnParams {
    GrnParams {
        primary: linear_params(d, d, rng),
        secondary: uniform_fan_in(d, d, d, rng),
        hidden: linear_params(d, d, rng),
        value: linear_params(d, d, rng),
        gate: linear_params(d, d, rng),
        ln_gain: Tensor2::filled(1, d, 1.0),
        ln_offset: Tensor2::zeros(1, d),
    }
}

impl ModelParams {
    /// Freshly initialised parameters for `cfg.variant`.
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let d = cfg.d_model;
        let rssi = encoder(cfg, cfg.rssi_features, rng);
        let accel = cfg.variant.uses_accel().then(|| encoder(cfg, cfg.accel_features, rng));
        let fusion = match cfg.variant {
            Variant::NoGrn => FusionParams::Concat(linear_params(2 * d, d, rng)),
            _ => FusionParams::Grn(grn(d, rng)),
        };
        let attention = (cfg.variant != Variant::NoTransformer).then(|| AttentionParams {
            query: uniform_fan_in(d, d, d, rng),
            key: uniform_fan_in(d, d, d, rng),
            value: uniform_fan_in(d, d, d, rng),
            output: uniform_fan_in(d, d, d, rng),
        });
        let head = HeadParams {
            ln_gain: Tensor2::filled(1, d, 1.0),
            ln_offset: Tensor2::zeros(1, d),
            expand: linear_params(d, 4 * d, rng),
            contract: linear_params(4 * d, d, rng),
            emission: linear_params(d, cfg.rooms, rng),
            backcast_grn: grn(d, rng),
            backcast: linear_params(d, cfg.rssi_features, rng),
        };
        let crf = cfg.variant.uses_crf().then(|| TransitionMatrix::zeros(cfg.rooms));
        Self {
            rssi,
            accel,
            fusion,
            attention,
            head,
            crf,
        }
    }

    /// Same structure with every entry zero; used for gradients.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    pub fn fill(&mut self, v: f64) {
        for (_, t) in self.named_mut() {
            t.fill(v);
        }
    }

    pub fn named(&self) -> Vec<(String, &Tensor2)> {
        let mut out = Vec::new();
        self.visit("", &mut out);
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor2)> {
        let mut out = Vec::new();
        self.visit_mut("", &mut out);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.is_finite())
    }

    /// All entries flattened in visiting order.
    pub fn flatten(&self) -> Vec<f64> {
        self.named().iter().flat_map(|(_, t)| t.data().iter().copied()).collect()
    }

    pub fn unflatten(&mut self, flat: &[f64]) {
        let mut off = 0;
        for (_, t) in self.named_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len(), "flat parameter length");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(variant: Variant) -> ModelConfig {
        ModelConfig {
            d_model: 8,
            heads: 2,
            window: 4,
            rssi_features: 5,
            accel_features: 3,
            rooms: 3,
            variant,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn names_are_unique_and_variant_specific() {
        for v in Variant::ALL {
            let p = ModelParams::init(&cfg(v), &mut ChaCha8Rng::seed_from_u64(0));
            let names: Vec<String> = p.named().into_iter().map(|(n, _)| n).collect();
            let unique: std::collections::BTreeSet<_> = names.iter().collect();
            assert_eq!(unique.len(), names.len());
            assert_eq!(names.iter().any(|n| n.starts_with("accel.")), v != Variant::NoAccel, "{v}");
            assert_eq!(names.iter().any(|n| n.starts_with("crf.")), v != Variant::NoCrf, "{v}");
            assert_eq!(names.iter().any(|n| n.starts_with("attention.")), v != Variant::NoTransformer);
        }
        let p = ModelParams::init(&cfg(Variant::Full), &mut ChaCha8Rng::seed_from_u64(0));
        let names: Vec<String> = p.named().into_iter().map(|(n, _)| n).collect();
        assert!(names.contains(&"rssi.lstm.w_e".to_string()));
        assert!(names.contains(&"head.backcast_grn.gate.bias".to_string()));
        assert!(names.contains(&"crf.scores".to_string()));
    }

    #[test]
    fn flatten_round_trip() {
        let p = ModelParams::init(&cfg(Variant::Full), &mut ChaCha8Rng::seed_from_u64(1));
        let flat = p.flatten();
        assert_eq!(flat.len(), p.num_parameters());
        let mut q = p.zeros_like();
        assert!(q.flatten().iter().all(|&v| v == 0.0));
        q.unflatten(&flat);
        assert_eq!(p, q);
    }
}
