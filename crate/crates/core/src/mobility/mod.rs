//! Daily transition counts and hallway-mediated room-to-room durations
//! over predicted or ground-truth room sequences.

mod report;
mod sequence;

pub use report::{default_pairs, mobility_report, DayMetrics, MeanStd, MobilityReport, MobilitySummary, Offsets, PairStats};
pub use sequence::{count_daily_transitions, pair_transition_durations, HallwayLayout, RoomSequence};
