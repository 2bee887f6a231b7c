use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::{ACCEL_FEATURES, DEFAULT_WINDOW, RSSI_FEATURES};
use crate::error::{Error, Result};
use crate::nn::ops::check_dropout_rate;

/// Which component, if any, is removed from the full network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    /// Encoders replaced by sinusoidal positions plus a per-step linear map.
    NoLstm,
    /// Fusion by concatenation and a linear map.
    NoGrn,
    /// Self-attention skipped.
    NoTransformer,
    /// Per-step softmax cross-entropy and argmax decoding.
    NoCrf,
    /// Accelerometer branch removed.
    NoAccel,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::NoLstm,
        Variant::NoGrn,
        Variant::NoTransformer,
        Variant::NoCrf,
        Variant::NoAccel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoLstm => "no-lstm",
            Variant::NoGrn => "no-grn",
            Variant::NoTransformer => "no-transformer",
            Variant::NoCrf => "no-crf",
            Variant::NoAccel => "no-accel",
        }
    }

    pub fn uses_crf(self) -> bool {
        self != Variant::NoCrf
    }

    pub fn uses_accel(self) -> bool {
        self != Variant::NoAccel
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            let valid: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
            Error::Config(format!("unknown ablation `{s}`; valid variants: {}", valid.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Embedding width.
    pub d_model: usize,
    pub heads: usize,
    /// Window length in seconds.
    pub window: usize,
    pub rssi_features: usize,
    pub accel_features: usize,
    pub rooms: usize,
    pub dropout: f64,
    /// Huber threshold of the backcast loss.
    pub huber_tau: f64,
    #[serde(default = "default_variant")]
    pub variant: Variant,
}

fn default_variant() -> Variant {
    Variant::Full
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 128,
            heads: 4,
            window: DEFAULT_WINDOW,
            rssi_features: RSSI_FEATURES,
            accel_features: ACCEL_FEATURES,
            rooms: 6,
            dropout: 0.15,
            huber_tau: 1.0,
            variant: Variant::Full,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d_model < 2 || self.heads == 0 || self.d_model % self.heads != 0 {
            return bad(format!(
                "d_model ({}) must be >= 2 and divisible by heads ({})",
                self.d_model, self.heads
            ));
        }
        if self.window == 0 || self.rssi_features == 0 || self.rooms == 0 {
            return bad("window, rssi_features and rooms must be >= 1".into());
        }
        if self.accel_features == 0 && self.variant.uses_accel() {
            return bad("accel_features must be >= 1 unless the variant is no-accel".into());
        }
        if !(self.huber_tau > 0.0) {
            return bad(format!("huber_tau must be > 0, got {}", self.huber_tau));
        }
        check_dropout_rate(self.dropout)
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}
