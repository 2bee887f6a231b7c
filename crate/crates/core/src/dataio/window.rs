use serde::{Deserialize, Serialize};

use super::frame::{SensorFrame, ACCEL_FEATURES, RSSI_FEATURES};
use crate::error::{Error, Result};
use crate::nn::Tensor2;

/// Default window length in seconds.
pub const DEFAULT_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub subject_id: String,
    pub day_index: i64,
    pub start_timestamp: i64,
}

/// One model input: `T x r` RSSI, `T x a` accelerometer and `T` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub rssi: Tensor2,
    pub accel: Tensor2,
    pub labels: Vec<usize>,
    pub meta: SampleMeta,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn timestamps(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.len() as i64).map(move |i| self.meta.start_timestamp + i)
    }
}

fn usable(f: &SensorFrame) -> bool {
    !f.missing && f.room.is_some()
}

/// Maximal runs of consecutive, labeled, non-missing seconds of one subject-day.
pub fn contiguous_runs(frames: &[SensorFrame]) -> Vec<&[SensorFrame]> {
    let mut runs = Vec::new();
    let mut start = 0;
    while start < frames.len() {
        if !usable(&frames[start]) {
            start += 1;
            continue;
        }
        let mut end = start + 1;
        while end < frames.len()
            && usable(&frames[end])
            && frames[end].timestamp == frames[end - 1].timestamp + 1
            && frames[end].subject_id == frames[start].subject_id
            && frames[end].day_index == frames[start].day_index
        {
            end += 1;
        }
        runs.push(&frames[start..end]);
        start = end;
    }
    runs
}

/// Cuts fixed-length windows at `stride` steps inside every contiguous run.
/// Frames must already be imputed.
pub fn window(frames: &[SensorFrame], t: usize, stride: usize) -> Result<Vec<Sample>> {
    if t == 0 || stride == 0 {
        return Err(Error::Config(format!("window length and stride must be >= 1 (got {t}, {stride})")));
    }
    let mut out = Vec::new();
    for run in contiguous_runs(frames) {
        let mut s = 0;
        while s + t <= run.len() {
            out.push(make_sample(&run[s..s + t])?);
            s += stride;
        }
    }
    Ok(out)
}

fn make_sample(frames: &[SensorFrame]) -> Result<Sample> {
    let t = frames.len();
    let mut rssi = Tensor2::zeros(t, RSSI_FEATURES);
    let mut accel = Tensor2::zeros(t, ACCEL_FEATURES);
    for (i, f) in frames.iter().enumerate() {
        if f.rssi.len() != RSSI_FEATURES || f.accel.len() != ACCEL_FEATURES {
            return Err(Error::dim("frame features", RSSI_FEATURES + ACCEL_FEATURES, f.rssi.len() + f.accel.len()));
        }
        for (k, v) in f.rssi.iter().enumerate() {
            rssi.set(i, k, v.ok_or_else(|| Error::Domain(format!("unimputed RSSI at t={}", f.timestamp)))?);
        }
        for (k, v) in f.accel.iter().enumerate() {
            accel.set(i, k, v.ok_or_else(|| Error::Domain(format!("unimputed accelerometer at t={}", f.timestamp)))?);
        }
    }
    Ok(Sample {
        rssi,
        accel,
        labels: frames.iter().map(|f| f.room.expect("usable frame")).collect(),
        meta: SampleMeta {
            subject_id: frames[0].subject_id.clone(),
            day_index: frames[0].day_index,
            start_timestamp: frames[0].timestamp,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frames(n: usize) -> Vec<SensorFrame> {
        (0..n)
            .map(|i| {
                let mut f = SensorFrame::empty(1000 + i as i64, "HC01", 0);
                f.rssi = (0..RSSI_FEATURES).map(|k| Some((i * k) as f64 / 1000.0)).collect();
                f.accel = vec![Some(0.5); ACCEL_FEATURES];
                f.room = Some(i % 6);
                f
            })
            .collect()
    }

    #[test]
    fn ten_frames_make_one_sample() {
        let s = window(&frames(10), 10, 10).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].rssi.shape(), (10, 20));
        assert_eq!(s[0].accel.shape(), (10, 6));
        assert_eq!(s[0].labels.len(), 10);
    }

    #[test]
    fn stride_one_count() {
        assert_eq!(window(&frames(19), 10, 1).unwrap().len(), 10);
        assert_eq!(window(&frames(9), 10, 1).unwrap().len(), 0);
    }

    #[test]
    fn gap_breaks_windows() {
        let mut f = frames(11);
        f.remove(5);
        assert_eq!(window(&f, 10, 1).unwrap().len(), 0);
        let mut f = frames(10);
        f[5].missing = true;
        assert_eq!(window(&f, 10, 1).unwrap().len(), 0);
    }

    #[test]
    fn unimputed_values_are_rejected() {
        let mut f = frames(10);
        f[3].rssi[0] = None;
        assert!(window(&f, 10, 10).is_err());
        assert!(window(&frames(10), 0, 1).is_err());
    }

    proptest! {
        #[test]
        fn stride_t_partitions(len in 0usize..80, t in 1usize..12) {
            let s = window(&frames(len), t, t).unwrap();
            let covered: usize = s.iter().map(Sample::len).sum();
            prop_assert!(covered <= len);
            if len % t == 0 {
                prop_assert_eq!(covered, len);
            }
            for w in &s {
                prop_assert_eq!(w.labels.len(), t);
                prop_assert!(w.labels.iter().all(|&l| l < 6));
            }
        }
    }
}
