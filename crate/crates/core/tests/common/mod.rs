#![allow(dead_code)]

use dcmn::dataio::{Sample, SampleMeta};
use dcmn::model::{Batch, ModelConfig, ModelParams, Variant};
use dcmn::nn::Tensor2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tiny_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        d_model: 8,
        heads: 2,
        window: 4,
        rssi_features: 5,
        accel_features: 3,
        rooms: 3,
        dropout: 0.15,
        huber_tau: 1.0,
        variant,
    }
}

pub fn random_tensor(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor2 {
    Tensor2::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Initialised parameters with every entry jittered, so zero-initialised
/// biases, unit gains and CRF scores all carry non-trivial values.
pub fn random_params(cfg: &ModelConfig, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::init(cfg, &mut rng);
    for (_, t) in p.named_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    p
}

pub fn random_sample(cfg: &ModelConfig, rng: &mut impl Rng) -> Sample {
    Sample {
        rssi: random_tensor(cfg.window, cfg.rssi_features, 0.0, 1.0, rng),
        accel: random_tensor(cfg.window, cfg.accel_features, 0.0, 1.0, rng),
        labels: (0..cfg.window).map(|_| rng.random_range(0..cfg.rooms)).collect(),
        meta: SampleMeta {
            subject_id: "HC01".into(),
            day_index: 0,
            start_timestamp: 0,
        },
    }
}

pub fn random_batch(cfg: &ModelConfig, size: usize, seed: u64) -> (Batch, Vec<usize>, Vec<Sample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Sample> = (0..size).map(|_| random_sample(cfg, &mut rng)).collect();
    let refs: Vec<&Sample> = samples.iter().collect();
    let batch = Batch::from_samples(&refs, cfg).unwrap();
    let labels = samples.iter().flat_map(|s| s.labels.iter().copied()).collect();
    (batch, labels, samples)
}
