//! Recording schema, ingestion and the 1 Hz preprocessing pipeline.

mod frame;
mod norm;
mod recording_csv;
mod resample;
mod vocab;
mod window;

pub use frame::{
    feature_names, impute_rssi, Recording, SensorFrame, ACCEL_FEATURES, ACCEL_IMPUTE_G, ACCESS_POINTS,
    RSSI_FEATURES, RSSI_FLOOR_DB,
};
pub use norm::{apply_norm, fit_norm, NormStats};
pub use recording_csv::{header, load_recordings, read_recordings, write_recordings};
pub use resample::{resample_1hz, RawReading, RssiAggregate};
pub use vocab::{RoomVocabulary, DINING_ROOM, HALLWAY, KITCHEN, LIVING_ROOM, PORCH, STAIRS};
pub use window::{contiguous_runs, window, Sample, SampleMeta, DEFAULT_WINDOW};
