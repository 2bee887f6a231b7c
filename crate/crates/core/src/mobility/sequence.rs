use serde::{Deserialize, Serialize};

use crate::dataio::{Recording, RoomVocabulary, HALLWAY};
use crate::error::{Error, Result};

/// Per-second room ids of one subject-day, possibly with gaps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomSequence {
    pub subject_id: String,
    pub day_index: i64,
    pub timestamps: Vec<i64>,
    pub rooms: Vec<usize>,
}

impl RoomSequence {
    pub fn new(subject_id: impl Into<String>, day_index: i64, timestamps: Vec<i64>, rooms: Vec<usize>) -> Result<Self> {
        if timestamps.len() != rooms.len() {
            return Err(Error::dim("room sequence", timestamps.len(), rooms.len()));
        }
        if let Some(w) = timestamps.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Domain(format!(
                "room sequence timestamps must increase strictly ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self {
            subject_id: subject_id.into(),
            day_index,
            timestamps,
            rooms,
        })
    }

    /// Consecutive seconds starting at `start`.
    pub fn contiguous(subject_id: impl Into<String>, day_index: i64, start: i64, rooms: Vec<usize>) -> Self {
        let timestamps = (0..rooms.len() as i64).map(|i| start + i).collect();
        Self::new(subject_id, day_index, timestamps, rooms).expect("increasing timestamps")
    }

    /// Labeled, non-missing frames of a recording.
    pub fn from_recording(rec: &Recording) -> Result<Self> {
        let (timestamps, rooms) = rec
            .frames
            .iter()
            .filter(|f| !f.missing)
            .filter_map(|f| f.room.map(|r| (f.timestamp, r)))
            .unzip();
        Self::new(rec.subject_id.clone(), rec.day_index, timestamps, rooms)
    }

    pub fn len(&self) -> usize {
        self.rooms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rooms.is_empty()
    }

    pub fn key(&self) -> (String, i64) {
        (self.subject_id.clone(), self.day_index)
    }

    /// Maximal runs of 1 s steps.
    pub fn segments(&self) -> Vec<&[usize]> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.len() {
            if i == self.len() || self.timestamps[i] != self.timestamps[i - 1] + 1 {
                out.push(&self.rooms[start..i]);
                start = i;
            }
        }
        out
    }

    /// Width-3 majority filter inside each segment: a step whose two
    /// neighbours agree takes their room. Segment ends are kept.
    pub fn smoothed(&self) -> Self {
        let mut rooms = self.rooms.clone();
        let mut offset = 0;
        for seg in self.segments() {
            for t in 1..seg.len().saturating_sub(1) {
                if seg[t - 1] == seg[t + 1] {
                    rooms[offset + t] = seg[t - 1];
                }
            }
            offset += seg.len();
        }
        Self {
            rooms,
            ..self.clone()
        }
    }
}

/// Room changes between consecutive seconds; gaps are not transitions.
pub fn count_daily_transitions(seq: &RoomSequence) -> usize {
    seq.segments()
        .iter()
        .map(|s| s.windows(2).filter(|w| w[0] != w[1]).count())
        .sum()
}

/// The hallway hub and the rooms it connects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HallwayLayout {
    pub hub: usize,
    /// `connected[r]`: room `r` opens onto the hub.
    pub connected: Vec<bool>,
}

impl HallwayLayout {
    /// Every non-hub room of `vocab` opens onto the hallway unless listed
    /// in `not_connected`.
    pub fn new(vocab: &RoomVocabulary, not_connected: &[&str]) -> Result<Self> {
        let hub = vocab.id(HALLWAY)?;
        let mut connected: Vec<bool> = (0..vocab.len()).map(|r| r != hub).collect();
        for name in not_connected {
            connected[vocab.id(name)?] = false;
        }
        Ok(Self { hub, connected })
    }

    pub fn from_adjacency(hub: usize, rooms: usize, adjacent: impl Fn(usize, usize) -> bool) -> Self {
        Self {
            hub,
            connected: (0..rooms).map(|r| r != hub && adjacent(hub, r)).collect(),
        }
    }

    pub fn check_pair(&self, a: usize, b: usize) -> Result<()> {
        let ok = |r: usize| r < self.connected.len() && self.connected[r];
        if a == b || !ok(a) || !ok(b) {
            return Err(Error::Domain(format!("rooms {a} and {b} are not a hallway-connected pair")));
        }
        Ok(())
    }
}

/// Seconds from the first hallway step through the first step in the
/// destination, for every `A, hallway^k, B` run (either direction, k >= 1).
pub fn pair_transition_durations(seq: &RoomSequence, pair: (usize, usize), layout: &HallwayLayout) -> Result<Vec<usize>> {
    layout.check_pair(pair.0, pair.1)?;
    let matches = |p: usize, q: usize| (p, q) == pair || (q, p) == pair;
    let mut out = Vec::new();
    for seg in seq.segments() {
        // run-length encode
        let mut runs: Vec<(usize, usize)> = Vec::new();
        for &r in seg {
            match runs.last_mut() {
                Some((room, n)) if *room == r => *n += 1,
                _ => runs.push((r, 1)),
            }
        }
        for w in runs.windows(3) {
            let [(p, _), (h, k), (q, _)] = [w[0], w[1], w[2]];
            if h == layout.hub && matches(p, q) {
                out.push(k + 1);
            }
        }
    }
    Ok(out)
}
