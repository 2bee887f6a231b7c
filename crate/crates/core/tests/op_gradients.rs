//! Backward passes of every differentiable building block against central
//! differences, 20 random instances each.

mod common;

use common::{random_tensor, tiny_config};
use dcmn::crf::{nll, nll_with_grad, TransitionMatrix};
use dcmn::model::{
    attention_backward, attention_forward, encode, encode_backward, grn_backward, grn_forward, EncoderParams,
    ModelParams, Variant, Visit,
};
use dcmn::nn::gradcheck::compare;
use dcmn::nn::ops::{
    elu, elu_grad, layer_norm_rows, layer_norm_rows_backward, linear_rows, linear_rows_backward, mish, mish_grad,
    sigmoid, softmax, softmax_backward, DropoutMask, LinearParams,
};
use dcmn::nn::{finite_diff_grad, Tensor2};
use dcmn::train::{huber, huber_grad};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INSTANCES: u64 = 20;
const EPS: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;

fn assert_grad(op: &str, analytic: &[f64], f: impl FnMut(&[f64]) -> f64, theta: &[f64]) {
    let numeric = finite_diff_grad(f, theta, EPS).unwrap();
    let r = compare(op, analytic, &numeric, EPS).unwrap();
    assert!(r.max_relative_error <= TOLERANCE, "{op}: {:.3e}", r.max_relative_error);
}

fn flat<V: Visit>(v: &V) -> Vec<f64> {
    let mut out = Vec::new();
    v.visit("", &mut out);
    out.iter().flat_map(|(_, t)| t.data().iter().copied()).collect()
}

fn unflat<V: Visit>(v: &mut V, data: &[f64]) -> usize {
    let mut out = Vec::new();
    v.visit_mut("", &mut out);
    let mut off = 0;
    for (_, t) in out {
        let n = t.len();
        t.data_mut().copy_from_slice(&data[off..off + n]);
        off += n;
    }
    off
}

fn weighted(out: &Tensor2, w: &Tensor2) -> f64 {
    out.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

fn jitter<V: Visit>(v: &mut V, rng: &mut impl Rng) {
    let mut out = Vec::new();
    v.visit_mut("", &mut out);
    for (_, t) in out {
        for x in t.data_mut() {
            *x += rng.random_range(-0.3..0.3);
        }
    }
}

#[test]
fn scalar_activations() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    type Pair = (&'static str, fn(f64) -> f64, fn(f64) -> f64);
    let ops: [Pair; 4] = [
        ("elu", elu, elu_grad),
        ("mish", mish, mish_grad),
        ("sigmoid", sigmoid, |x| sigmoid(x) * (1.0 - sigmoid(x))),
        ("tanh", f64::tanh, |x| 1.0 - x.tanh().powi(2)),
    ];
    for (name, f, g) in ops {
        for _ in 0..INSTANCES {
            let x = rng.random_range(-4.0..4.0);
            assert_grad(name, &[g(x)], |t| f(t[0]), &[x]);
        }
    }
    for _ in 0..INSTANCES {
        let (x, target, tau) = (rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0), rng.random_range(0.5..2.0));
        assert_grad("huber", &[huber_grad(x, target, tau)], |t| huber(t[0], target, tau), &[x]);
    }
}

#[test]
fn softmax_vector() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..INSTANCES {
        let n = rng.random_range(1..7);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = softmax(&x).unwrap();
        let mut dx = vec![0.0; n];
        softmax_backward(&y, &w, &mut dx);
        let f = |t: &[f64]| softmax(t).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum();
        assert_grad("softmax", &dx, f, &x);
    }
}

#[test]
fn linear_layer() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..INSTANCES {
        let (rows, i, o) = (rng.random_range(1..4), rng.random_range(1..5), rng.random_range(1..5));
        let x = random_tensor(rows, i, -1.0, 1.0, &mut rng);
        let p = LinearParams {
            weight: random_tensor(o, i, -1.0, 1.0, &mut rng),
            bias: random_tensor(1, o, -1.0, 1.0, &mut rng),
        };
        let w = random_tensor(rows, o, -1.0, 1.0, &mut rng);
        let mut g = LinearParams::zeros(i, o);
        let dx = linear_rows_backward(&x, &p, &w, &mut g);
        let mut analytic = dx.data().to_vec();
        analytic.extend(flat(&g));
        let mut theta = x.data().to_vec();
        theta.extend(flat(&p));
        let f = |t: &[f64]| {
            let x = Tensor2::from_vec(rows, i, t[..rows * i].to_vec()).unwrap();
            let mut q = p.clone();
            unflat(&mut q, &t[rows * i..]);
            weighted(&linear_rows(&x, &q), &w)
        };
        assert_grad("linear", &analytic, f, &theta);
    }
}

#[test]
fn layer_norm_rows_with_affine() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..INSTANCES {
        let (rows, d) = (rng.random_range(1..4), rng.random_range(2..7));
        let x = random_tensor(rows, d, -2.0, 2.0, &mut rng);
        let gain = random_tensor(1, d, 0.5, 1.5, &mut rng);
        let offset = random_tensor(1, d, -0.5, 0.5, &mut rng);
        let w = random_tensor(rows, d, -1.0, 1.0, &mut rng);
        let (_, cache) = layer_norm_rows(&x, gain.data(), offset.data());
        let (mut dg, mut doff) = (vec![0.0; d], vec![0.0; d]);
        let dx = layer_norm_rows_backward(&cache, gain.data(), &w, &mut dg, &mut doff);
        let mut analytic = dx.data().to_vec();
        analytic.extend(&dg);
        analytic.extend(&doff);
        let mut theta = x.data().to_vec();
        theta.extend(gain.data());
        theta.extend(offset.data());
        let n = rows * d;
        let f = |t: &[f64]| {
            let x = Tensor2::from_vec(rows, d, t[..n].to_vec()).unwrap();
            weighted(&layer_norm_rows(&x, &t[n..n + d], &t[n + d..]).0, &w)
        };
        assert_grad("layer_norm", &analytic, f, &theta);
    }
}

#[test]
fn gated_residual_network_including_glu() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = tiny_config(Variant::Full);
    for seed in 0..INSTANCES {
        let mut params = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        jitter(&mut params.head.backcast_grn, &mut rng);
        let p = params.head.backcast_grn;
        let rows = 3;
        let d = cfg.d_model;
        let x = random_tensor(rows, d, -1.0, 1.0, &mut rng);
        let y = random_tensor(rows, d, -1.0, 1.0, &mut rng);
        let w = random_tensor(rows, d, -1.0, 1.0, &mut rng);
        let (_, cache) = grn_forward(&p, &x, Some(&y), DropoutMask::identity());
        let mut g = p.clone();
        unflat(&mut g, &vec![0.0; flat(&p).len()]);
        let (dx, dy) = grn_backward(&p, &cache, &w, &mut g);
        let mut analytic = dx.data().to_vec();
        analytic.extend(dy.unwrap().data());
        analytic.extend(flat(&g));
        let mut theta = x.data().to_vec();
        theta.extend(y.data());
        theta.extend(flat(&p));
        let n = rows * d;
        let f = |t: &[f64]| {
            let x = Tensor2::from_vec(rows, d, t[..n].to_vec()).unwrap();
            let y = Tensor2::from_vec(rows, d, t[n..2 * n].to_vec()).unwrap();
            let mut q = p.clone();
            unflat(&mut q, &t[2 * n..]);
            weighted(&grn_forward(&q, &x, Some(&y), DropoutMask::identity()).0, &w)
        };
        assert_grad("grn", &analytic, f, &theta);
    }
}

#[test]
fn multi_head_self_attention() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = tiny_config(Variant::Full);
    for seed in 0..INSTANCES {
        let params = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let p = params.attention.unwrap();
        let (batch, d) = (2, cfg.d_model);
        let rows = batch * cfg.window;
        let x = random_tensor(rows, d, -1.0, 1.0, &mut rng);
        let w = random_tensor(rows, d, -1.0, 1.0, &mut rng);
        let (_, cache) = attention_forward(&p, &x, batch, cfg.heads);
        let mut g = p.clone();
        unflat(&mut g, &vec![0.0; flat(&p).len()]);
        let dx = attention_backward(&p, &cache, &w, batch, cfg.heads, &mut g);
        let mut analytic = dx.data().to_vec();
        analytic.extend(flat(&g));
        let mut theta = x.data().to_vec();
        theta.extend(flat(&p));
        let n = rows * d;
        let f = |t: &[f64]| {
            let x = Tensor2::from_vec(rows, d, t[..n].to_vec()).unwrap();
            let mut q = p.clone();
            unflat(&mut q, &t[n..]);
            weighted(&attention_forward(&q, &x, batch, cfg.heads).0, &w)
        };
        assert_grad("self_attention", &analytic, f, &theta);
    }
}

fn check_encoder(variant: Variant, seed0: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed0);
    let cfg = tiny_config(variant);
    for seed in 0..INSTANCES {
        let mut params = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        jitter(&mut params.rssi, &mut rng);
        let p: EncoderParams = params.rssi;
        let batch = 2;
        let rows = batch * cfg.window;
        let x = random_tensor(rows, cfg.rssi_features, 0.0, 1.0, &mut rng);
        let w = random_tensor(rows, cfg.d_model, -1.0, 1.0, &mut rng);
        let (_, cache) = encode(&p, &x, batch, cfg.window).unwrap();
        let mut g = p.clone();
        unflat(&mut g, &vec![0.0; flat(&p).len()]);
        encode_backward(&p, &cache, &w, &mut g);
        let f = |t: &[f64]| {
            let mut q = p.clone();
            unflat(&mut q, t);
            weighted(&encode(&q, &x, batch, cfg.window).unwrap().0, &w)
        };
        assert_grad(&format!("encoder/{variant}"), &flat(&g), f, &flat(&p));
    }
}

#[test]
fn input_attention_lstm_encoder() {
    check_encoder(Variant::Full, 7);
}

#[test]
fn positional_linear_encoder() {
    check_encoder(Variant::NoLstm, 8);
}

#[test]
fn crf_negative_log_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..INSTANCES {
        let (t, n) = (rng.random_range(1..6), rng.random_range(1..5));
        let e = random_tensor(t, n, -2.0, 2.0, &mut rng);
        let tm = TransitionMatrix::new(
            random_tensor(n, n, -1.0, 1.0, &mut rng),
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let y: Vec<usize> = (0..t).map(|_| rng.random_range(0..n)).collect();
        let (_, g) = nll_with_grad(&e, &y, &tm).unwrap();
        let mut analytic = g.emissions.data().to_vec();
        analytic.extend(g.scores.data());
        analytic.extend(&g.start);
        let mut theta = e.data().to_vec();
        theta.extend(tm.scores.data());
        theta.extend(tm.start.data());
        let f = |th: &[f64]| {
            let e = Tensor2::from_vec(t, n, th[..t * n].to_vec()).unwrap();
            let s = Tensor2::from_vec(n, n, th[t * n..t * n + n * n].to_vec()).unwrap();
            let tm = TransitionMatrix::new(s, th[t * n + n * n..].to_vec()).unwrap();
            nll(&e, &y, &tm).unwrap()
        };
        assert_grad("crf_nll", &analytic, f, &theta);
    }
}
