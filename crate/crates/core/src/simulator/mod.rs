//! Synthetic smart-home generator: room graph, semi-Markov mobility,
//! log-distance RSSI and wrist accelerometer energy.

mod accel;
mod dataset;
mod floorplan;
mod mobility_profile;
mod rssi;
mod trajectory;

pub use accel::{synthesize_accel, AccelPhysics};
pub use dataset::{load_sim_config, make_dataset, write_dataset, Preset, SimConfig, SubjectSpec, EPOCH_S};
pub use floorplan::{default_floorplan, default_floorplan_spec, distance, Floorplan, FloorplanSpec, Point, RoomGeometry};
pub use mobility_profile::{ActivitySignature, MobilityProfile};
pub use rssi::{synthesize_rssi, wearable_positions, RssiPhysics, MIN_DISTANCE_M};
pub use trajectory::{simulate_trajectory, Trajectory};
