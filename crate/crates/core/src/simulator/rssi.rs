use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::floorplan::{distance, Floorplan, Point};
use super::trajectory::Trajectory;
use crate::dataio::{ACCESS_POINTS, RSSI_FEATURES, RSSI_FLOOR_DB};
use crate::error::{Error, Result};
use crate::seed;

/// Distances below this are floored (wearable on top of an AP).
pub const MIN_DISTANCE_M: f64 = 0.1;

/// Log-distance path loss with Gaussian shadowing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RssiPhysics {
    /// Received power at 1 m.
    pub tx_power_db: f64,
    pub path_loss_exponent: f64,
    pub shadowing_sigma_db: f64,
    /// Probability that a single reading is missing.
    pub dropout_prob: f64,
    /// Lateral offset of each wrist from the body position.
    pub wearable_offset_m: f64,
}

impl Default for RssiPhysics {
    fn default() -> Self {
        Self {
            tx_power_db: -40.0,
            path_loss_exponent: 2.5,
            shadowing_sigma_db: 4.0,
            dropout_prob: 0.05,
            wearable_offset_m: 0.2,
        }
    }
}

impl RssiPhysics {
    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.path_loss_exponent > 0.0) {
            return Err(Error::Config(format!("{path}.path_loss_exponent must be > 0")));
        }
        if !(self.shadowing_sigma_db >= 0.0) {
            return Err(Error::Config(format!("{path}.shadowing_sigma_db must be >= 0")));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(Error::Config(format!("{path}.dropout_prob must be in [0, 1]")));
        }
        if !self.tx_power_db.is_finite() || !(self.wearable_offset_m >= 0.0) {
            return Err(Error::Config(format!("{path}: tx_power_db and wearable_offset_m must be finite")));
        }
        Ok(())
    }

    /// Noise-free received power at `dist` metres.
    pub fn mean_rssi(&self, dist: f64) -> f64 {
        self.tx_power_db - 10.0 * self.path_loss_exponent * dist.max(MIN_DISTANCE_M).log10()
    }
}

/// Left and right wrist positions for a body position.
pub fn wearable_positions(body: Point, offset: f64) -> [Point; 2] {
    [[body[0] - offset, body[1]], [body[0] + offset, body[1]]]
}

/// One 20-vector per second: left wrist AP1..AP10, then right wrist AP1..AP10.
pub fn synthesize_rssi(traj: &Trajectory, fp: &Floorplan, physics: &RssiPhysics, seed: u64) -> Vec<Vec<Option<f64>>> {
    let mut rng = seed::rng(seed, &[0x551]);
    let noise = Normal::new(0.0, physics.shadowing_sigma_db).expect("sigma >= 0");
    traj.positions
        .iter()
        .map(|&body| {
            let mut out = Vec::with_capacity(RSSI_FEATURES);
            for wrist in wearable_positions(body, physics.wearable_offset_m) {
                for ap in fp.access_points.iter().take(ACCESS_POINTS) {
                    let v = physics.mean_rssi(distance(wrist, *ap)) + noise.sample(&mut rng);
                    let dropped = physics.dropout_prob > 0.0 && rng.random::<f64>() < physics.dropout_prob;
                    out.push((!dropped).then_some(v.max(RSSI_FLOOR_DB)));
                }
            }
            out
        })
        .collect()
}
