//! Cattle behaviour monitoring from collar inertial sensors.
//!
//! Stages: [`ingest`] reads 2 Hz accelerometer/gyroscope CSVs and label
//! segments, [`features`] turns them into windowed feature vectors,
//! [`classify`] trains a random forest over behaviours, [`summarize`] rolls
//! per-sample predictions up into hourly and daily minutes, and [`estrus`]
//! looks for heat in the hourly series. [`synth`] generates labelled herds for
//! testing, and [`pipeline`] wires the stages together over the filesystem.

pub mod classify;
pub mod cli;
pub mod config;
pub mod estrus;
pub mod features;
pub mod ingest;
pub mod pipeline;
pub mod summarize;
pub mod synth;
