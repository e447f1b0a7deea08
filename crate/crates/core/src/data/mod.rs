//! Sensor data preparation: CSV ingestion, z-normalization, sliding
//! windows, stratified splits and a synthetic non-IID client generator.
//!
//! Real and synthetic sources both produce [`SensorSeries`] and go through
//! the same window → split → normalize pipeline ([`prepare_client`]).

mod csv_io;
mod series;
mod split;
mod synthetic;
mod window;

pub use csv_io::{ingest_csv, write_csv, CsvSchema, CSV_HEADER};
pub use series::{z_normalize, ChannelStats, Normalized, SensorSeries, CHANNELS};
pub use split::{stratified_split, Split};
pub use synthetic::{
    generate_series, generate_synthetic, DeviceRanges, SyntheticClient, SyntheticSpec,
};
pub use window::{window, window_count, WindowSet, DEFAULT_STEP, DEFAULT_WINDOW};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One client's prepared train and test windows.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientData {
    pub id: usize,
    pub train: WindowSet,
    pub test: WindowSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineParams {
    #[serde(default = "default_window")]
    pub window_len: usize,
    #[serde(default = "default_step")]
    pub step: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

fn default_step() -> usize {
    DEFAULT_STEP
}

fn default_train_fraction() -> f64 {
    0.8
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            window_len: DEFAULT_WINDOW,
            step: DEFAULT_STEP,
            train_fraction: 0.8,
        }
    }
}

/// Windows a client's series, splits it stratified by class, then
/// z-normalizes both splits with statistics fitted on the training split.
pub fn prepare_client(
    id: usize,
    series: &SensorSeries,
    params: &PipelineParams,
    seed: u64,
) -> Result<ClientData> {
    let windows = window(series, params.window_len, params.step)?;
    let split = stratified_split(&windows, params.train_fraction, seed)?;
    for w in &split.warnings {
        log::warn!("client {id}: {w}");
    }
    let stats = ChannelStats::fit(&split.train);
    let (mut train, mut test) = (split.train, split.test);
    stats.apply(&mut train);
    stats.apply(&mut test);
    Ok(ClientData { id, train, test })
}
