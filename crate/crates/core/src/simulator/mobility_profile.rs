use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::floorplan::Floorplan;
use crate::dataio::{DINING_ROOM, HALLWAY, KITCHEN, LIVING_ROOM, PORCH, STAIRS};
use crate::error::{Error, Result};

/// Per-axis wrist signal while dwelling in a room: `offset + amplitude·sin(2πft)`.
/// Integer frequencies keep the per-second energy independent of phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivitySignature {
    pub offset_g: [f64; 3],
    pub amplitude_g: [f64; 3],
    pub frequency_hz: f64,
}

impl ActivitySignature {
    /// Mean-square signal of one axis over a whole number of cycles.
    pub fn energy(&self, axis: usize, amplitude_scale: f64) -> f64 {
        let a = self.amplitude_g[axis] * amplitude_scale;
        self.offset_g[axis].powi(2) + 0.5 * a * a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityProfile {
    /// Mean dwell per room name, seconds.
    pub mean_dwell_s: BTreeMap<String, f64>,
    pub walk_speed_mps: f64,
    pub tremor_amplitude_g: f64,
    pub activity: BTreeMap<String, ActivitySignature>,
}

fn sig(offset_g: [f64; 3], amplitude_g: [f64; 3], frequency_hz: f64) -> ActivitySignature {
    ActivitySignature {
        offset_g,
        amplitude_g,
        frequency_hz,
    }
}

fn default_activity() -> BTreeMap<String, ActivitySignature> {
    [
        (KITCHEN, sig([0.15, 0.85, 0.25], [0.30, 0.18, 0.12], 2.0)),
        (LIVING_ROOM, sig([0.60, 0.20, 0.70], [0.03, 0.02, 0.03], 1.0)),
        (DINING_ROOM, sig([0.35, 0.50, 0.65], [0.10, 0.16, 0.06], 1.0)),
        (HALLWAY, sig([0.05, 0.95, 0.10], [0.20, 0.28, 0.18], 2.0)),
        (STAIRS, sig([0.10, 0.90, 0.30], [0.35, 0.40, 0.30], 2.0)),
        (PORCH, sig([0.25, 0.80, 0.40], [0.12, 0.10, 0.10], 3.0)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

impl MobilityProfile {
    /// Healthy-control preset: brisk walking, no tremor.
    pub fn healthy_control() -> Self {
        let dwell = [
            (KITCHEN, 300.0),
            (LIVING_ROOM, 420.0),
            (DINING_ROOM, 300.0),
            (HALLWAY, 2.0),
            (STAIRS, 45.0),
            (PORCH, 60.0),
        ];
        Self {
            mean_dwell_s: dwell.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            walk_speed_mps: 1.2,
            tremor_amplitude_g: 0.0,
            activity: default_activity(),
        }
    }

    /// PD-like preset: slow transitions, tremor, longer stays.
    pub fn parkinsonian() -> Self {
        let mut p = Self::healthy_control();
        for (room, d) in p.mean_dwell_s.iter_mut() {
            if room != HALLWAY {
                *d *= 1.5;
            } else {
                *d = 3.0;
            }
        }
        p.walk_speed_mps = 0.5;
        p.tremor_amplitude_g = 0.3;
        p
    }

    pub fn validate(&self, fp: &Floorplan, path: &str) -> Result<()> {
        if !(self.walk_speed_mps > 0.0) {
            return Err(Error::Config(format!("{path}.walk_speed_mps must be > 0")));
        }
        if !(self.tremor_amplitude_g >= 0.0) {
            return Err(Error::Config(format!("{path}.tremor_amplitude_g must be >= 0")));
        }
        for room in fp.rooms.names() {
            match self.mean_dwell_s.get(room) {
                Some(d) if *d > 0.0 => {}
                Some(_) => return Err(Error::Config(format!("{path}.mean_dwell_s.{room} must be > 0"))),
                None => return Err(Error::Config(format!("{path}.mean_dwell_s.{room} is missing"))),
            }
            if !self.activity.contains_key(room) {
                return Err(Error::Config(format!("{path}.activity.{room} is missing")));
            }
        }
        Ok(())
    }

    pub fn dwell_by_id(&self, fp: &Floorplan) -> Vec<f64> {
        fp.rooms.names().iter().map(|r| self.mean_dwell_s[r]).collect()
    }

    pub fn activity_by_id(&self, fp: &Floorplan) -> Vec<ActivitySignature> {
        fp.rooms.names().iter().map(|r| self.activity[r].clone()).collect()
    }
}
