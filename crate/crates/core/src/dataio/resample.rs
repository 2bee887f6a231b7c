use serde::{Deserialize, Serialize};

use super::frame::{SensorFrame, ACCEL_FEATURES, RSSI_FEATURES};
use crate::error::{Error, Result};

/// One raw wearable reading (about 20 Hz in the source data).
#[derive(Debug, Clone, PartialEq)]
pub struct RawReading {
    pub timestamp: f64,
    pub rssi: Vec<Option<f64>>,
    pub accel: Vec<Option<f64>>,
    pub room: Option<usize>,
}

/// How RSSI readings within one second are combined. Accelerometer values
/// are always averaged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RssiAggregate {
    #[default]
    Mean,
    Max,
}

fn combine(values: impl Iterator<Item = Option<f64>>, agg: RssiAggregate) -> Option<f64> {
    let mut n = 0usize;
    let mut acc = match agg {
        RssiAggregate::Mean => 0.0,
        RssiAggregate::Max => f64::NEG_INFINITY,
    };
    for v in values.flatten() {
        n += 1;
        match agg {
            RssiAggregate::Mean => acc += v,
            RssiAggregate::Max => acc = acc.max(v),
        }
    }
    match (n, agg) {
        (0, _) => None,
        (_, RssiAggregate::Mean) => Some(acc / n as f64),
        (_, RssiAggregate::Max) => Some(acc),
    }
}

/// Majority label; ties go to the label seen first.
fn majority(labels: impl Iterator<Item = Option<usize>>) -> Option<usize> {
    let mut counts: Vec<(usize, usize)> = Vec::new();
    for l in labels.flatten() {
        match counts.iter_mut().find(|(id, _)| *id == l) {
            Some((_, c)) => *c += 1,
            None => counts.push((l, 1)),
        }
    }
    let mut best: Option<(usize, usize)> = None;
    for (id, c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((id, c));
        }
    }
    best.map(|(id, _)| id)
}

/// One frame per wall-clock second from the first to the last reading.
/// Seconds without readings are emitted with `missing = true`.
pub fn resample_1hz(
    readings: &[RawReading],
    subject_id: &str,
    day_index: i64,
    agg: RssiAggregate,
) -> Result<Vec<SensorFrame>> {
    if readings.is_empty() {
        return Ok(Vec::new());
    }
    if readings.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
        return Err(Error::Domain("raw readings must have nondecreasing timestamps".into()));
    }
    for r in readings {
        if r.rssi.len() != RSSI_FEATURES || r.accel.len() != ACCEL_FEATURES {
            return Err(Error::dim(
                "raw reading",
                format!("{RSSI_FEATURES}+{ACCEL_FEATURES}"),
                format!("{}+{}", r.rssi.len(), r.accel.len()),
            ));
        }
    }
    let first = readings[0].timestamp.floor() as i64;
    let last = readings[readings.len() - 1].timestamp.floor() as i64;
    let mut frames = Vec::with_capacity((last - first + 1) as usize);
    let mut i = 0;
    for sec in first..=last {
        let start = i;
        while i < readings.len() && (readings[i].timestamp.floor() as i64) == sec {
            i += 1;
        }
        let bucket = &readings[start..i];
        let mut f = SensorFrame::empty(sec, subject_id, day_index);
        if bucket.is_empty() {
            f.missing = true;
        } else {
            f.rssi = (0..RSSI_FEATURES)
                .map(|k| combine(bucket.iter().map(|r| r.rssi[k]), agg))
                .collect();
            f.accel = (0..ACCEL_FEATURES)
                .map(|k| combine(bucket.iter().map(|r| r.accel[k]), RssiAggregate::Mean))
                .collect();
            f.room = majority(bucket.iter().map(|r| r.room));
        }
        frames.push(f);
    }
    Ok(frames)
}
