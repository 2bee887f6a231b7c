//! Room-level indoor localisation from wearable RSSI and accelerometer
//! streams, with a synthetic smart-home generator, training harness and
//! in-home mobility analytics.

pub mod cli;
pub mod crf;
pub mod dataio;
pub mod error;
pub mod mobility;
pub mod model;
pub mod nn;
pub mod seed;
pub mod simulator;
pub mod train;

pub use error::{Error, Result};
