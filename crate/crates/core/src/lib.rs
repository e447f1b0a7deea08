//! Federated learning simulator with distance-driven model growth.
//!
//! The crate is generic over the floating-point type (see [`Scalar`]);
//! the aliases at the root pin the common `f32`/`f64` instantiations.

// Validation writes `!(x >= 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod client;
pub mod data;
pub mod error;
pub mod fabric;
pub mod metrics;
pub mod nn;
pub mod runner;
pub mod scalar;
pub mod scheduler;
pub mod seed;

pub use aggregation::{Algorithm, CommLedger, FedDistConfig};
pub use client::ClientState;
pub use error::{Error, Result};
pub use fabric::{LayerWeights, ModelWeights, NeuronVector, ParamKind};
pub use metrics::RoundReport;
pub use nn::{Architecture, Batch, Dataset, LayerKind, LayerSpec, TrainingConfig};
pub use scalar::{Precision, Scalar};
pub use scheduler::{ExperimentConfig, ScenarioSpec};

pub type ModelWeightsF32 = ModelWeights<f32>;
pub type ModelWeightsF64 = ModelWeights<f64>;
pub type LayerWeightsF32 = LayerWeights<f32>;
pub type LayerWeightsF64 = LayerWeights<f64>;
pub type BatchF32 = Batch<f32>;
pub type BatchF64 = Batch<f64>;
pub type TrainingConfigF32 = TrainingConfig<f32>;
pub type TrainingConfigF64 = TrainingConfig<f64>;
pub type ClientStateF32 = ClientState<f32>;
pub type ClientStateF64 = ClientState<f64>;
