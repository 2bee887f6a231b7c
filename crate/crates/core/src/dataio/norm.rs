use std::path::Path;

use serde::{Deserialize, Serialize};

use super::frame::{feature_names, SensorFrame, ACCEL_FEATURES, RSSI_FEATURES};
use crate::error::{Error, Result};

/// Per-feature min/max fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
    pub feature_names: Vec<String>,
}

const FEATURES: usize = RSSI_FEATURES + ACCEL_FEATURES;

/// Fits min/max over every present value. Features never observed get a
/// zero-width range.
pub fn fit_norm(frames: &[SensorFrame]) -> NormStats {
    let mut mins = vec![f64::INFINITY; FEATURES];
    let mut maxs = vec![f64::NEG_INFINITY; FEATURES];
    for f in frames {
        for (k, v) in f.features().enumerate() {
            if let Some(v) = v {
                mins[k] = mins[k].min(v);
                maxs[k] = maxs[k].max(v);
            }
        }
    }
    for k in 0..FEATURES {
        if mins[k] > maxs[k] {
            mins[k] = 0.0;
            maxs[k] = 0.0;
        }
    }
    NormStats {
        mins,
        maxs,
        feature_names: feature_names(),
    }
}

impl NormStats {
    /// Linear map of feature `k` onto `[0, 1]`, clamped; a constant feature maps to 0.
    #[inline]
    pub fn scale(&self, k: usize, v: f64) -> f64 {
        let range = self.maxs[k] - self.mins[k];
        if range <= 0.0 {
            return 0.0;
        }
        ((v - self.mins[k]) / range).clamp(0.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mins.len() != FEATURES || self.maxs.len() != FEATURES || self.feature_names.len() != FEATURES {
            return Err(Error::dim("NormStats", FEATURES, self.mins.len()));
        }
        if self.mins.iter().zip(&self.maxs).any(|(a, b)| !(a <= b)) {
            return Err(Error::Config("NormStats requires max >= min for every feature".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let s = serde_json::to_string_pretty(self)?;
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let stats: NormStats = serde_json::from_str(&s)?;
        stats.validate()?;
        Ok(stats)
    }
}

pub fn apply_norm(frames: &mut [SensorFrame], stats: &NormStats) {
    for f in frames {
        for (k, v) in f.rssi.iter_mut().enumerate() {
            *v = v.map(|x| stats.scale(k, x));
        }
        for (k, v) in f.accel.iter_mut().enumerate() {
            *v = v.map(|x| stats.scale(RSSI_FEATURES + k, x));
        }
    }
}
