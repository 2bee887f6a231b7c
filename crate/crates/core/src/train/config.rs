use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::OptimizerConfig;
use crate::dataio::{ACCEL_FEATURES, DEFAULT_WINDOW, RSSI_FEATURES};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Variant};

/// Training hyperparameters. `d_model`, `epochs` and `learning_rate` are
/// grids; every (d_model, learning_rate) pair is trained once for the largest
/// epoch budget and the smaller budgets are read off the same run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub d_model: Vec<usize>,
    pub epochs: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub heads: usize,
    pub window: usize,
    /// Step between training windows; evaluation windows never overlap.
    pub train_stride: usize,
    pub dropout: f64,
    pub huber_tau: f64,
    pub batch_size: usize,
    /// Epochs without a validation-accuracy improvement before stopping.
    pub patience: usize,
    /// Share of each training subject's windows held out for validation.
    pub validation_fraction: f64,
    pub optimizer: OptimizerConfig,
    pub variant: Variant,
    /// Forbid decoding moves between rooms that are not adjacent.
    pub mask_transitions: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            d_model: vec![128, 256],
            epochs: vec![200, 300],
            learning_rate: vec![0.01, 0.0001],
            heads: 4,
            window: DEFAULT_WINDOW,
            train_stride: DEFAULT_WINDOW,
            dropout: 0.15,
            huber_tau: 1.0,
            batch_size: 64,
            patience: 20,
            validation_fraction: 0.1,
            optimizer: OptimizerConfig::default(),
            variant: Variant::Full,
            mask_transitions: false,
            seed: 0,
        }
    }
}

/// One trained grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub d_model: usize,
    pub learning_rate: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.d_model.is_empty() || self.epochs.is_empty() || self.learning_rate.is_empty() {
            return bad("d_model, epochs and learning_rate grids must be non-empty");
        }
        if self.epochs.contains(&0) {
            return bad("epochs must be >= 1");
        }
        if self.learning_rate.iter().any(|lr| !(*lr > 0.0 && lr.is_finite())) {
            return bad("learning_rate values must be positive and finite");
        }
        if !(self.huber_tau > 0.0) {
            return bad("huber_tau must be > 0");
        }
        if self.batch_size == 0 || self.train_stride == 0 {
            return bad("batch_size and train_stride must be >= 1");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must be in [0, 1)");
        }
        let o = &self.optimizer;
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.eps > 0.0) {
            return bad("optimizer: beta1, beta2 in [0, 1) and eps > 0 required");
        }
        if o.lookahead_k == 0 || !(0.0..=1.0).contains(&o.lookahead_alpha) {
            return bad("optimizer: lookahead_k >= 1 and lookahead_alpha in [0, 1] required");
        }
        if o.max_grad_norm.is_some_and(|m| !(m > 0.0)) {
            return bad("optimizer: max_grad_norm must be > 0 when set");
        }
        for &d in &self.d_model {
            self.model_config(d, 2).validate()?;
        }
        Ok(())
    }

    pub fn max_epochs(&self) -> usize {
        self.epochs.iter().copied().max().unwrap_or(0)
    }

    pub fn grid(&self) -> Vec<GridPoint> {
        self.d_model
            .iter()
            .flat_map(|&d_model| {
                self.learning_rate.iter().map(move |&learning_rate| GridPoint { d_model, learning_rate })
            })
            .collect()
    }

    pub fn model_config(&self, d_model: usize, rooms: usize) -> ModelConfig {
        ModelConfig {
            d_model,
            heads: self.heads,
            window: self.window,
            rssi_features: RSSI_FEATURES,
            accel_features: ACCEL_FEATURES,
            rooms,
            dropout: self.dropout,
            huber_tau: self.huber_tau,
            variant: self.variant,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let cfg: TrainConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Config(format!("{}: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
