use serde::{Deserialize, Serialize};

/// RSSI features per timestep: 10 access points seen from each of two wearables.
pub const RSSI_FEATURES: usize = 20;
/// Accelerometer features per timestep: x, y, z for each of two wearables.
pub const ACCEL_FEATURES: usize = 6;
pub const ACCESS_POINTS: usize = 10;
/// Lowest acceptable RSSI; missing readings are imputed with it.
pub const RSSI_FLOOR_DB: f64 = -120.0;
/// Value used for missing accelerometer readings.
pub const ACCEL_IMPUTE_G: f64 = 0.0;

/// One 1 Hz timestep of a recording.
///
/// RSSI order is wearable-left AP1..AP10 then wearable-right AP1..AP10;
/// accelerometer order is left x, y, z then right x, y, z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub timestamp: i64,
    pub rssi: Vec<Option<f64>>,
    pub accel: Vec<Option<f64>>,
    pub room: Option<usize>,
    pub subject_id: String,
    pub day_index: i64,
    /// Set by resampling for seconds that had no readings at all.
    #[serde(default)]
    pub missing: bool,
}

impl SensorFrame {
    pub fn empty(timestamp: i64, subject_id: &str, day_index: i64) -> Self {
        Self {
            timestamp,
            rssi: vec![None; RSSI_FEATURES],
            accel: vec![None; ACCEL_FEATURES],
            room: None,
            subject_id: subject_id.to_string(),
            day_index,
            missing: false,
        }
    }

    /// RSSI then accelerometer values.
    pub fn features(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        self.rssi.iter().chain(self.accel.iter()).copied()
    }
}

/// `rssi_01..rssi_20, acc_01..acc_06`.
pub fn feature_names() -> Vec<String> {
    (1..=RSSI_FEATURES)
        .map(|i| format!("rssi_{i:02}"))
        .chain((1..=ACCEL_FEATURES).map(|i| format!("acc_{i:02}")))
        .collect()
}

/// Frames of one subject on one day, in timestamp order.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject_id: String,
    pub day_index: i64,
    pub frames: Vec<SensorFrame>,
}

/// Replaces missing RSSI with the floor and missing accelerometer values with 0 g.
pub fn impute_rssi(frames: &mut [SensorFrame]) {
    for f in frames {
        for v in &mut f.rssi {
            if v.is_none() {
                *v = Some(RSSI_FLOOR_DB);
            }
        }
        for v in &mut f.accel {
            if v.is_none() {
                *v = Some(ACCEL_IMPUTE_G);
            }
        }
    }
}
