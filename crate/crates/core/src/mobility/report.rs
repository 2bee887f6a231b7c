use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::sequence::{count_daily_transitions, pair_transition_durations, HallwayLayout, RoomSequence};
use crate::dataio::{RoomVocabulary, DINING_ROOM, KITCHEN, LIVING_ROOM};
use crate::error::{Error, Result};
use crate::train::mean_std;

/// Kitchen–living, kitchen–dining and dining–living.
pub fn default_pairs() -> Vec<[String; 2]> {
    [[KITCHEN, LIVING_ROOM], [KITCHEN, DINING_ROOM], [DINING_ROOM, LIVING_ROOM]]
        .iter()
        .map(|[a, b]| [a.to_string(), b.to_string()])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(values: &[f64]) -> Option<Self> {
        (!values.is_empty()).then(|| {
            let (mean, std) = mean_std(values);
            Self { mean, std }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub rooms: [String; 2],
    pub count: usize,
    /// Seconds over every transition event; absent when there were none.
    pub duration: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilitySummary {
    /// Over subject-days.
    pub daily_transitions: MeanStd,
    pub pairs: Vec<PairStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayMetrics {
    pub subject_id: String,
    pub day_index: i64,
    pub transitions: usize,
    /// Durations per pair, in `pairs` order.
    pub durations: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offsets {
    pub daily_transitions: f64,
    /// Per pair; absent unless both sides saw the pair.
    pub pairs: Vec<Option<f64>>,
    /// Mean over the pairs that have an offset.
    pub duration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityReport {
    pub smoothed: bool,
    pub predicted: MobilitySummary,
    pub truth: MobilitySummary,
    pub offsets: Offsets,
    pub predicted_days: Vec<DayMetrics>,
    pub truth_days: Vec<DayMetrics>,
}

fn day_metrics(seq: &RoomSequence, pairs: &[(usize, usize)], layout: &HallwayLayout) -> Result<DayMetrics> {
    Ok(DayMetrics {
        subject_id: seq.subject_id.clone(),
        day_index: seq.day_index,
        transitions: count_daily_transitions(seq),
        durations: pairs
            .iter()
            .map(|&p| pair_transition_durations(seq, p, layout))
            .collect::<Result<_>>()?,
    })
}

fn summarise(days: &[DayMetrics], names: &[[String; 2]]) -> Result<MobilitySummary> {
    let counts: Vec<f64> = days.iter().map(|d| d.transitions as f64).collect();
    let daily_transitions = MeanStd::of(&counts).ok_or(Error::Empty("subject-days"))?;
    let pairs = names
        .iter()
        .enumerate()
        .map(|(i, rooms)| {
            let all: Vec<f64> = days.iter().flat_map(|d| d.durations[i].iter().map(|&x| x as f64)).collect();
            PairStats {
                rooms: rooms.clone(),
                count: all.len(),
                duration: MeanStd::of(&all),
            }
        })
        .collect();
    Ok(MobilitySummary {
        daily_transitions,
        pairs,
    })
}

fn by_key(seqs: &[RoomSequence], what: &str) -> Result<BTreeMap<(String, i64), RoomSequence>> {
    let mut out = BTreeMap::new();
    for s in seqs {
        if out.insert(s.key(), s.clone()).is_some() {
            return Err(Error::Report(format!(
                "duplicate {what} sequence for subject {} day {}",
                s.subject_id, s.day_index
            )));
        }
    }
    Ok(out)
}

/// Compares predicted and ground-truth sequences keyed by subject-day.
pub fn mobility_report(
    pred: &[RoomSequence],
    truth: &[RoomSequence],
    vocab: &RoomVocabulary,
    layout: &HallwayLayout,
    pairs: &[[String; 2]],
    smooth: bool,
) -> Result<MobilityReport> {
    let ids: Vec<(usize, usize)> = pairs
        .iter()
        .map(|[a, b]| Ok((vocab.id(a)?, vocab.id(b)?)))
        .collect::<Result<_>>()?;
    let p = by_key(pred, "predicted")?;
    let t = by_key(truth, "ground-truth")?;
    let pk: BTreeSet<_> = p.keys().cloned().collect();
    let tk: BTreeSet<_> = t.keys().cloned().collect();
    if pk != tk {
        let fmt = |s: BTreeSet<&(String, i64)>| {
            s.iter().map(|(a, d)| format!("{a}/day{d}")).collect::<Vec<_>>().join(", ")
        };
        return Err(Error::Report(format!(
            "subject-day keys differ; missing predictions: [{}]; missing ground truth: [{}]",
            fmt(tk.difference(&pk).collect()),
            fmt(pk.difference(&tk).collect())
        )));
    }
    let prep = |s: &RoomSequence| if smooth { s.smoothed() } else { s.clone() };
    let predicted_days = p
        .values()
        .map(|s| day_metrics(&prep(s), &ids, layout))
        .collect::<Result<Vec<_>>>()?;
    let truth_days = t.values().map(|s| day_metrics(s, &ids, layout)).collect::<Result<Vec<_>>>()?;
    let predicted = summarise(&predicted_days, pairs)?;
    let truth = summarise(&truth_days, pairs)?;
    let pair_offsets: Vec<Option<f64>> = predicted
        .pairs
        .iter()
        .zip(&truth.pairs)
        .map(|(a, b)| Some((a.duration?.mean - b.duration?.mean).abs()))
        .collect();
    let present: Vec<f64> = pair_offsets.iter().flatten().copied().collect();
    let offsets = Offsets {
        daily_transitions: (predicted.daily_transitions.mean - truth.daily_transitions.mean).abs(),
        duration: (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64),
        pairs: pair_offsets,
    };
    Ok(MobilityReport {
        smoothed: smooth,
        predicted,
        truth,
        offsets,
        predicted_days,
        truth_days,
    })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Report(e.to_string())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MobilityReport {
    /// `metric, predicted_mean, predicted_std, truth_mean, truth_std, offset`.
    pub fn summary_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "predicted_mean", "predicted_std", "truth_mean", "truth_std", "offset"])
            .map_err(csv_err)?;
        let (p, t) = (&self.predicted.daily_transitions, &self.truth.daily_transitions);
        w.write_record([
            "daily_transitions".to_string(),
            p.mean.to_string(),
            p.std.to_string(),
            t.mean.to_string(),
            t.std.to_string(),
            self.offsets.daily_transitions.to_string(),
        ])
        .map_err(csv_err)?;
        for ((pp, tp), off) in self.predicted.pairs.iter().zip(&self.truth.pairs).zip(&self.offsets.pairs) {
            w.write_record([
                format!("{}-{}", pp.rooms[0], pp.rooms[1]),
                opt(pp.duration.map(|d| d.mean)),
                opt(pp.duration.map(|d| d.std)),
                opt(tp.duration.map(|d| d.mean)),
                opt(tp.duration.map(|d| d.std)),
                opt(*off),
            ])
            .map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| Error::Report(e.to_string()))
    }

    /// Plot-ready rows `metric, subject, day, value`; metric names carry a
    /// `predicted.` or `truth.` prefix and every duration event is its own row.
    pub fn long_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "subject", "day", "value"]).map_err(csv_err)?;
        for (source, days, summary) in [
            ("predicted", &self.predicted_days, &self.predicted),
            ("truth", &self.truth_days, &self.truth),
        ] {
            for d in days {
                let (subject, day) = (d.subject_id.as_str(), d.day_index.to_string());
                w.write_record([&format!("{source}.daily_transitions"), subject, &day, &d.transitions.to_string()])
                    .map_err(csv_err)?;
                for (stats, durations) in summary.pairs.iter().zip(&d.durations) {
                    let metric = format!("{source}.{}-{}.duration_s", stats.rooms[0], stats.rooms[1]);
                    for x in durations {
                        w.write_record([&metric, subject, &day, &x.to_string()]).map_err(csv_err)?;
                    }
                }
            }
        }
        w.into_inner().map_err(|e| Error::Report(e.to_string()))
    }
}
