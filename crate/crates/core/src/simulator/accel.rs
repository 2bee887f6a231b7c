use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::floorplan::Floorplan;
use super::mobility_profile::{ActivitySignature, MobilityProfile};
use super::trajectory::Trajectory;
use crate::dataio::ACCEL_FEATURES;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccelPhysics {
    /// White noise per sub-sample.
    pub noise_g: f64,
    /// Internal sampling rate summarised into each 1 Hz feature.
    pub sub_sample_hz: usize,
    /// Gait amplitude per m/s of walking speed.
    pub gait_g_per_mps: f64,
    pub gait_frequency_hz: f64,
    /// Amplitude of the non-dominant (left) wrist relative to the right.
    pub left_wrist_scale: f64,
}

impl Default for AccelPhysics {
    fn default() -> Self {
        Self {
            noise_g: 0.02,
            sub_sample_hz: 20,
            gait_g_per_mps: 0.25,
            gait_frequency_hz: 2.0,
            left_wrist_scale: 0.6,
        }
    }
}

impl AccelPhysics {
    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.noise_g >= 0.0) || self.sub_sample_hz == 0 || !(self.left_wrist_scale >= 0.0) {
            return Err(Error::Config(format!(
                "{path}: noise_g >= 0, sub_sample_hz >= 1 and left_wrist_scale >= 0 required"
            )));
        }
        Ok(())
    }
}

const GAIT_OFFSET_G: [f64; 3] = [0.05, 0.95, 0.10];

/// Per-second mean-square energy (g²) per axis: left x, y, z then right x, y, z.
///
/// Dwelling follows the room's activity signature, walking a gait burst
/// scaled by speed; tremor at 4–6 Hz with per-second amplitude in
/// `[0.5, 1.5]·tremor` is added on top.
pub fn synthesize_accel(
    traj: &Trajectory,
    fp: &Floorplan,
    profile: &MobilityProfile,
    physics: &AccelPhysics,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut rng = seed::rng(seed, &[0xacc]);
    let signatures = profile.activity_by_id(fp);
    let noise = Normal::new(0.0, physics.noise_g).expect("sigma >= 0");
    let gait = ActivitySignature {
        offset_g: GAIT_OFFSET_G,
        amplitude_g: [physics.gait_g_per_mps * profile.walk_speed_mps; 3],
        frequency_hz: physics.gait_frequency_hz,
    };
    let hz = physics.sub_sample_hz;
    (0..traj.len())
        .map(|t| {
            let sig = if traj.walking[t] { &gait } else { &signatures[traj.rooms[t]] };
            let (tremor_amp, tremor_hz, tremor_phase) = if profile.tremor_amplitude_g > 0.0 {
                (
                    profile.tremor_amplitude_g * rng.random_range(0.5..1.5),
                    rng.random_range(4.0..6.0),
                    rng.random_range(0.0..TAU),
                )
            } else {
                (0.0, 0.0, 0.0)
            };
            let mut out = Vec::with_capacity(ACCEL_FEATURES);
            for wrist in 0..2 {
                let scale = if wrist == 0 { physics.left_wrist_scale } else { 1.0 };
                let tremor_scale = if wrist == 0 { 0.5 } else { 1.0 };
                for axis in 0..3 {
                    let phase = rng.random_range(0.0..TAU);
                    let mut sq = 0.0;
                    for j in 0..hz {
                        let tau = j as f64 / hz as f64;
                        let mut v = sig.offset_g[axis]
                            + scale * sig.amplitude_g[axis] * (TAU * sig.frequency_hz * tau + phase).sin();
                        if tremor_amp > 0.0 {
                            v += tremor_scale * tremor_amp * (TAU * tremor_hz * tau + tremor_phase).sin();
                        }
                        if physics.noise_g > 0.0 {
                            v += noise.sample(&mut rng);
                        }
                        sq += v * v;
                    }
                    out.push(sq / hz as f64);
                }
            }
            out
        })
        .collect()
}
