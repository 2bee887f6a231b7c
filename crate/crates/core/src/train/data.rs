//! From recordings to normalised model windows.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::dataio::{apply_norm, fit_norm, impute_rssi, window, NormStats, Recording, RoomVocabulary, Sample, SensorFrame};
use crate::error::{Error, Result};
use crate::seed;

/// Imputed copies of the frames of `recordings`.
pub fn imputed_frames<'a>(recordings: impl IntoIterator<Item = &'a Recording>) -> Vec<Vec<SensorFrame>> {
    recordings
        .into_iter()
        .map(|r| {
            let mut frames = r.frames.clone();
            impute_rssi(&mut frames);
            frames
        })
        .collect()
}

/// Min/max statistics over the imputed frames of the training recordings.
pub fn fit_training_norm(recordings: &[&Recording]) -> Result<NormStats> {
    let frames: Vec<SensorFrame> = imputed_frames(recordings.iter().copied()).into_iter().flatten().collect();
    if frames.is_empty() {
        return Err(Error::Empty("training split"));
    }
    Ok(fit_norm(&frames))
}

/// Imputes, normalises and windows every recording.
pub fn make_samples(recordings: &[&Recording], norm: &NormStats, t: usize, stride: usize) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for mut frames in imputed_frames(recordings.iter().copied()) {
        apply_norm(&mut frames, norm);
        out.extend(window(&frames, t, stride)?);
    }
    Ok(out)
}

/// Holds out `fraction` of each subject's windows (rounded, at least one
/// when the subject has two or more) for validation.
pub fn split_validation(samples: Vec<Sample>, fraction: f64, seed: u64) -> (Vec<Sample>, Vec<Sample>) {
    let mut by_subject: BTreeMap<String, Vec<Sample>> = BTreeMap::new();
    for s in samples {
        by_subject.entry(s.meta.subject_id.clone()).or_default().push(s);
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (i, (_, mut group)) in by_subject.into_iter().enumerate() {
        let mut take = (fraction * group.len() as f64).round() as usize;
        if fraction > 0.0 && take == 0 && group.len() >= 2 {
            take = 1;
        }
        let mut order: Vec<usize> = (0..group.len()).collect();
        order.shuffle(&mut seed::rng(seed, &[i as u64]));
        let held: Vec<bool> = {
            let mut h = vec![false; group.len()];
            for &j in &order[..take] {
                h[j] = true;
            }
            h
        };
        for (s, h) in group.drain(..).zip(held) {
            if h {
                val.push(s);
            } else {
                train.push(s);
            }
        }
    }
    (train, val)
}

/// Decoder mask over `vocab` from room-name pairs; pairs are undirected.
pub fn forbidden_mask(vocab: &RoomVocabulary, pairs: &[[String; 2]]) -> Result<Vec<bool>> {
    let n = vocab.len();
    let mut mask = vec![false; n * n];
    for [a, b] in pairs {
        let (i, j) = (vocab.id(a)?, vocab.id(b)?);
        mask[i * n + j] = true;
        mask[j * n + i] = true;
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{ACCEL_FEATURES, RSSI_FEATURES, RSSI_FLOOR_DB};

    fn recording(subject: &str, n: usize, offset: f64) -> Recording {
        let frames = (0..n)
            .map(|i| {
                let mut f = SensorFrame::empty(i as i64, subject, 0);
                f.rssi = (0..RSSI_FEATURES)
                    .map(|k| if (i + k) % 7 == 0 { None } else { Some(-90.0 + offset + i as f64) })
                    .collect();
                f.accel = vec![Some(0.1 * i as f64); ACCEL_FEATURES];
                f.room = Some(i % 3);
                f
            })
            .collect();
        Recording {
            subject_id: subject.into(),
            day_index: 0,
            frames,
        }
    }

    #[test]
    fn training_windows_span_the_unit_interval() {
        let r = recording("HC01", 40, 0.0);
        let norm = fit_training_norm(&[&r]).unwrap();
        assert_eq!(norm.mins[0], RSSI_FLOOR_DB);
        let s = make_samples(&[&r], &norm, 10, 10).unwrap();
        assert_eq!(s.len(), 4);
        for k in 0..RSSI_FEATURES {
            let col: Vec<f64> = s.iter().flat_map(|w| (0..10).map(move |t| w.rssi.get(t, k))).collect();
            assert_eq!(col.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
            assert_eq!(col.iter().copied().fold(f64::NEG_INFINITY, f64::max), 1.0);
        }
        // test data outside the training range is clamped
        let hot = recording("PD01", 20, 50.0);
        let t = make_samples(&[&hot], &norm, 10, 10).unwrap();
        assert!(t.iter().all(|w| w.rssi.data().iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn validation_is_stratified_and_seeded() {
        let a = recording("HC01", 200, 0.0);
        let b = recording("HC02", 30, 0.0);
        let norm = fit_training_norm(&[&a, &b]).unwrap();
        let s = make_samples(&[&a, &b], &norm, 10, 10).unwrap();
        let (train, val) = split_validation(s.clone(), 0.1, 3);
        assert_eq!(train.len() + val.len(), 23);
        assert_eq!(val.iter().filter(|w| w.meta.subject_id == "HC01").count(), 2);
        assert_eq!(val.iter().filter(|w| w.meta.subject_id == "HC02").count(), 1);
        let (_, again) = split_validation(s, 0.1, 3);
        assert_eq!(val, again);
    }

    #[test]
    fn mask_is_symmetric() {
        let v = RoomVocabulary::default();
        let m = forbidden_mask(&v, &[["kitchen".into(), "porch".into()]]).unwrap();
        let (k, p) = (v.id("kitchen").unwrap(), v.id("porch").unwrap());
        assert!(m[k * 6 + p] && m[p * 6 + k]);
        assert_eq!(m.iter().filter(|&&x| x).count(), 2);
        assert!(forbidden_mask(&v, &[["kitchen".into(), "attic".into()]]).is_err());
    }
}
