mod common;

use common::{random_params, random_sample, random_tensor, tiny_config};
use dcmn::dataio::{Sample, SampleMeta};
use dcmn::model::{
    attn_lstm_encode, forward, fuse, input_attention, nonlinear_map, self_attend, AttentionParams, EncoderParams,
    FusionParams, ModelConfig, ModelParams, Variant,
};
use dcmn::nn::ops::{elu, layer_norm, mish, sigmoid};
use dcmn::nn::Tensor2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type NoRng = ChaCha8Rng;

fn matvec(w: &Tensor2, x: &[f64]) -> Vec<f64> {
    (0..w.rows()).map(|r| w.row(r).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn lstm_params(cfg: &ModelConfig, seed: u64) -> dcmn::model::AttnLstmParams {
    match random_params(cfg, seed).rssi {
        EncoderParams::AttnLstm(p) => p,
        _ => unreachable!(),
    }
}

/// `e_k = v · tanh(W_e P h + b_e + U_e x_k)` then softmax over features.
fn attention_oracle(h: &[f64], x: &Tensor2, p: &dcmn::model::AttnLstmParams) -> Vec<f64> {
    let q = add(&matvec(&p.w_e, &matvec(&p.proj, h)), p.b_e.data());
    let scores: Vec<f64> = (0..x.cols())
        .map(|k| {
            let u = matvec(&p.u_e, &x.column(k));
            add(&q, &u).iter().zip(p.v_e.data()).map(|(a, v)| v * a.tanh()).sum()
        })
        .collect();
    softmax(&scores)
}

#[test]
fn input_attention_examples() {
    let cfg = tiny_config(Variant::Full);
    let p = lstm_params(&cfg, 1);
    let series = [0.1, 0.7, 0.3, 0.9];
    let x = Tensor2::from_vec(4, 5, series.iter().flat_map(|&v| [v; 5]).collect()).unwrap();
    let alpha = input_attention(&[0.0; 8], &x, &p).unwrap();
    for a in &alpha {
        assert!((a - 0.2).abs() < 1e-15);
    }

    let mut one = tiny_config(Variant::Full);
    one.rssi_features = 1;
    let p1 = lstm_params(&one, 2);
    let x1 = Tensor2::from_vec(4, 1, vec![0.3, 0.2, 0.9, 0.4]).unwrap();
    assert_eq!(input_attention(&[0.5; 8], &x1, &p1).unwrap(), vec![1.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let x = random_tensor(4, 5, 0.0, 1.0, &mut rng);
        let h: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = input_attention(&h, &x, &p).unwrap();
        let want = attention_oracle(&h, &x, &p);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    assert!(input_attention(&[0.0; 7], &x, &p).is_err());
}

/// Straight-line encoder: attention from `h_{t-1}`, reweighting, LSTM cell.
fn encoder_oracle(x: &Tensor2, p: &dcmn::model::AttnLstmParams) -> Vec<Vec<f64>> {
    let d = p.w_h.cols();
    let (mut h, mut c) = (vec![0.0; d], vec![0.0; d]);
    let mut out = Vec::new();
    for t in 0..x.rows() {
        let alpha = attention_oracle(&h, x, p);
        let xhat: Vec<f64> = x.row(t).iter().zip(&alpha).map(|(a, b)| a * b).collect();
        let g = add(&add(&matvec(&p.w_x, &xhat), &matvec(&p.w_h, &h)), p.bias.data());
        for u in 0..d {
            let (i, f, gg, o) = (sigmoid(g[u]), sigmoid(g[d + u]), g[2 * d + u].tanh(), sigmoid(g[3 * d + u]));
            c[u] = f * c[u] + i * gg;
            h[u] = o * c[u].tanh();
        }
        out.push(h.clone());
    }
    out
}

#[test]
fn lstm_encoder_matches_recomputation() {
    let cfg = tiny_config(Variant::Full);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for seed in 0..10 {
        let p = lstm_params(&cfg, seed);
        let x = random_tensor(4, 5, 0.0, 1.0, &mut rng);
        let h = attn_lstm_encode(&x, &p).unwrap();
        let want = encoder_oracle(&x, &p);
        for t in 0..4 {
            for (a, b) in h.row(t).iter().zip(&want[t]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn lstm_single_step_by_hand() {
    // d = 2, zero input and zero weights: gates are sigmoid(0) = 0.5 and
    // tanh(0) = 0 except the forget bias, so c1 = 0 and h1 = 0; with a cell
    // bias of 1 the candidate is tanh(1).
    let mut cfg = tiny_config(Variant::Full);
    cfg.d_model = 2;
    cfg.window = 1;
    let mut p = lstm_params(&cfg, 0);
    for t in [&mut p.w_x, &mut p.w_h] {
        t.fill(0.0);
    }
    p.bias.fill(0.0);
    p.bias.data_mut()[4] = 1.0;
    p.bias.data_mut()[5] = 1.0;
    let x = Tensor2::zeros(1, 5);
    let h = attn_lstm_encode(&x, &p).unwrap();
    let c1 = 0.5 * 1f64.tanh();
    let h1 = 0.5 * c1.tanh();
    assert!((h.get(0, 0) - h1).abs() < 1e-15 && (h.get(0, 1) - h1).abs() < 1e-15);
}

#[test]
fn feature_permutation_is_equivariant() {
    let cfg = tiny_config(Variant::Full);
    let p = lstm_params(&cfg, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random_tensor(4, 5, 0.0, 1.0, &mut rng);
    let perm = [3, 0, 4, 1, 2];
    let mut xp = x.clone();
    let mut pp = p.clone();
    for (new, &old) in perm.iter().enumerate() {
        for t in 0..4 {
            xp.set(t, new, x.get(t, old));
        }
        for r in 0..pp.w_x.rows() {
            pp.w_x.set(r, new, p.w_x.get(r, old));
        }
    }
    let a = attn_lstm_encode(&x, &p).unwrap();
    let b = attn_lstm_encode(&xp, &pp).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-12);
}

fn grn_of(params: &ModelParams) -> dcmn::model::GrnParams {
    match &params.fusion {
        FusionParams::Grn(g) => g.clone(),
        _ => unreachable!(),
    }
}

fn grn_oracle(x: &[f64], y: &[f64], p: &dcmn::model::GrnParams) -> Vec<f64> {
    let pre = add(&add(&matvec(&p.primary.weight, x), &matvec(&p.secondary, y)), p.primary.bias.data());
    let act: Vec<f64> = pre.iter().map(|&v| elu(v)).collect();
    let hid = add(&matvec(&p.hidden.weight, &act), p.hidden.bias.data());
    let val = add(&matvec(&p.value.weight, &hid), p.value.bias.data());
    let gate = add(&matvec(&p.gate.weight, &hid), p.gate.bias.data());
    let glu: Vec<f64> = val.iter().zip(&gate).map(|(v, g)| v * sigmoid(*g)).collect();
    layer_norm(&add(x, &glu), p.ln_gain.data(), p.ln_offset.data()).unwrap()
}

#[test]
fn fusion_examples() {
    let cfg = tiny_config(Variant::Full);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut g = grn_of(&random_params(&cfg, 8));
    for _ in 0..20 {
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = fuse(&x, &y, &g).unwrap();
        for (a, b) in got.iter().zip(grn_oracle(&x, &y, &g)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    g.gate.bias.fill(-1e4);
    let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let closed = layer_norm(&x, g.ln_gain.data(), g.ln_offset.data()).unwrap();
    for _ in 0..10 {
        let y: Vec<f64> = (0..8).map(|_| rng.random_range(-50.0..50.0)).collect();
        assert_eq!(fuse(&x, &y, &g).unwrap(), closed);
    }
}

fn attention_oracle_dense(x: &Tensor2, p: &AttentionParams, heads: usize) -> Tensor2 {
    let (t, d) = x.shape();
    let dh = d / heads;
    let proj = |w: &Tensor2| -> Vec<Vec<f64>> {
        (0..t).map(|i| (0..d).map(|c| (0..d).map(|k| x.get(i, k) * w.get(k, c)).sum()).collect()).collect()
    };
    let (q, k, v) = (proj(&p.query), proj(&p.key), proj(&p.value));
    let mut concat = vec![vec![0.0; d]; t];
    for h in 0..heads {
        for i in 0..t {
            let s: Vec<f64> = (0..t)
                .map(|j| (0..dh).map(|c| q[i][h * dh + c] * k[j][h * dh + c]).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let a = softmax(&s);
            for c in 0..dh {
                concat[i][h * dh + c] = (0..t).map(|j| a[j] * v[j][h * dh + c]).sum();
            }
        }
    }
    let mut out = Tensor2::zeros(t, d);
    for i in 0..t {
        for c in 0..d {
            out.set(i, c, (0..d).map(|k| concat[i][k] * p.output.get(k, c)).sum());
        }
    }
    out
}

#[test]
fn self_attention_examples() {
    let mut cfg = tiny_config(Variant::Full);
    cfg.d_model = 4;
    let p = random_params(&cfg, 9).attention.unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..20 {
        let x = random_tensor(4, 4, -1.0, 1.0, &mut rng);
        let got = self_attend(&x, &p, 2).unwrap();
        assert!(got.max_abs_diff(&attention_oracle_dense(&x, &p, 2)) < 1e-12);
    }
    // one key: output is the value projection mixed by the output map
    let x = random_tensor(1, 4, -1.0, 1.0, &mut rng);
    let got = self_attend(&x, &p, 2).unwrap();
    let v: Vec<f64> = (0..4).map(|c| (0..4).map(|k| x.get(0, k) * p.value.get(k, c)).sum()).collect();
    for c in 0..4 {
        let want: f64 = (0..4).map(|k| v[k] * p.output.get(k, c)).sum();
        assert!((got.get(0, c) - want).abs() < 1e-12);
    }
    assert!(self_attend(&Tensor2::zeros(4, 5), &p, 2).is_err());
}

#[test]
fn identical_rows_give_uniform_attention() {
    let cfg = tiny_config(Variant::Full);
    let params = random_params(&cfg, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let row: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = Tensor2::from_rows(&[row.clone(), row.clone(), row.clone(), row]).unwrap();
    let (_, cache) = dcmn::model::attention_forward(params.attention.as_ref().unwrap(), &x, 1, 2);
    for v in cache.weights().data() {
        assert!((v - 0.25).abs() < 1e-15);
    }
}

#[test]
fn nonlinear_map_examples() {
    let cfg = tiny_config(Variant::Full);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut head = random_params(&cfg, 14).head;
    for _ in 0..20 {
        let a: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
        let got = nonlinear_map(&a, &b, &head).unwrap();
        assert!(got.iter().all(|v| v.abs() < 1.0));
        let z = layer_norm(&add(&a, &b), head.ln_gain.data(), head.ln_offset.data()).unwrap();
        let hid: Vec<f64> = add(&matvec(&head.expand.weight, &z), head.expand.bias.data())
            .into_iter()
            .map(mish)
            .collect();
        let mlp = add(&matvec(&head.contract.weight, &hid), head.contract.bias.data());
        for (g, w) in got.iter().zip(add(&z, &mlp)) {
            assert!((g - w.tanh()).abs() < 1e-12);
        }
    }
    for t in [&mut head.expand.weight, &mut head.expand.bias, &mut head.contract.weight, &mut head.contract.bias] {
        t.fill(0.0);
    }
    let a = vec![0.3; 8];
    let b: Vec<f64> = (0..8).map(|i| i as f64 / 4.0).collect();
    let z = layer_norm(&add(&a, &b), head.ln_gain.data(), head.ln_offset.data()).unwrap();
    let got = nonlinear_map(&a, &b, &head).unwrap();
    for (g, w) in got.iter().zip(z) {
        assert!((g - w.tanh()).abs() < 1e-15);
    }
}

fn full_size_sample(rng: &mut impl Rng) -> Sample {
    Sample {
        rssi: random_tensor(10, 20, 0.0, 1.0, rng),
        accel: random_tensor(10, 6, 0.0, 1.0, rng),
        labels: vec![0; 10],
        meta: SampleMeta {
            subject_id: "PD01".into(),
            day_index: 0,
            start_timestamp: 0,
        },
    }
}

#[test]
fn forward_shapes_and_inference_determinism() {
    let cfg = ModelConfig {
        d_model: 16,
        ..ModelConfig::default()
    };
    let params = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(15));
    let s = full_size_sample(&mut ChaCha8Rng::seed_from_u64(16));
    let (a, diag) = forward::<NoRng>(&s, &params, &cfg, None).unwrap();
    assert_eq!(a.emissions.shape(), (10, 6));
    assert_eq!(a.backcast.shape(), (10, 20));
    assert_eq!(diag.rssi_attention.unwrap().shape(), (10, 20));
    assert_eq!(diag.accel_attention.unwrap().shape(), (10, 6));
    assert_eq!(diag.self_attention.unwrap().shape(), (4 * 10, 10));
    let (b, _) = forward::<NoRng>(&s, &params, &cfg, None).unwrap();
    assert_eq!(a, b);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (c, _) = forward(&s, &params, &cfg, Some(&mut rng)).unwrap();
    assert_ne!(a, c, "training mode applies dropout");

    let mut bad = s.clone();
    bad.rssi = Tensor2::zeros(10, 19);
    assert!(forward::<NoRng>(&bad, &params, &cfg, None).is_err());
}

#[test]
fn no_accel_ignores_accelerometer() {
    let cfg = tiny_config(Variant::NoAccel);
    let params = random_params(&cfg, 17);
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let s = random_sample(&cfg, &mut rng);
    let (base, _) = forward::<NoRng>(&s, &params, &cfg, None).unwrap();
    for _ in 0..10 {
        let mut p = s.clone();
        p.accel = random_tensor(4, 3, -100.0, 100.0, &mut rng);
        assert_eq!(forward::<NoRng>(&p, &params, &cfg, None).unwrap().0, base);
    }
}

#[test]
fn room_permutation_permutes_emissions() {
    let cfg = tiny_config(Variant::Full);
    let params = random_params(&cfg, 19);
    let s = random_sample(&cfg, &mut ChaCha8Rng::seed_from_u64(20));
    let perm = [2, 0, 1];
    let mut pp = params.clone();
    for (new, &old) in perm.iter().enumerate() {
        pp.head.emission.weight.row_mut(new).copy_from_slice(params.head.emission.weight.row(old));
        pp.head.emission.bias.data_mut()[new] = params.head.emission.bias.data()[old];
    }
    let (a, _) = forward::<NoRng>(&s, &params, &cfg, None).unwrap();
    let (b, _) = forward::<NoRng>(&s, &pp, &cfg, None).unwrap();
    for t in 0..4 {
        for (new, &old) in perm.iter().enumerate() {
            assert_eq!(b.emissions.get(t, new), a.emissions.get(t, old));
        }
    }
}
