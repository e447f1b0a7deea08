//! Round-level FedAvg, FedProx and FedDist, with communication accounting.

mod distance;
mod feddist;
mod ledger;

pub use distance::{
    distance_matrix, divergence_threshold, select_divergent, DistanceMatrix, Divergent, Selection,
};
pub use feddist::{feddist_round, FedDistConfig};
pub use ledger::{ledger_totals, CommLedger, LedgerSummary, Phase, RoundEvent};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::client::ClientState;
use crate::error::{Error, Result};
use crate::fabric::{self, weighted_average, ModelWeights};
use crate::nn::{train_local, Architecture, Batch, TrainingConfig};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "fedavg")]
    FedAvg,
    #[serde(rename = "fedprox")]
    FedProx,
    #[serde(rename = "feddist")]
    FedDist,
    #[serde(rename = "local-only")]
    LocalOnly,
    #[serde(rename = "centralized")]
    Centralized,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::FedAvg,
        Algorithm::FedProx,
        Algorithm::FedDist,
        Algorithm::LocalOnly,
        Algorithm::Centralized,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FedAvg => "fedavg",
            Algorithm::FedProx => "fedprox",
            Algorithm::FedDist => "feddist",
            Algorithm::LocalOnly => "local-only",
            Algorithm::Centralized => "centralized",
        }
    }

    pub fn is_federated(self) -> bool {
        matches!(
            self,
            Algorithm::FedAvg | Algorithm::FedProx | Algorithm::FedDist
        )
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm {s:?}")))
    }
}

/// Identifies one local update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateContext {
    pub client: usize,
    pub round: usize,
    pub phase: Phase,
}

/// Produces a client's updated model from a starting point. The default
/// runs SGD; tests substitute scripted updates.
pub trait LocalTrainer<S: Scalar>: Sync {
    fn update(
        &self,
        ctx: &UpdateContext,
        start: &ModelWeights<S>,
        arch: &Architecture,
        data: &Batch<S>,
        cfg: &TrainingConfig<S>,
        seed: u64,
    ) -> Result<ModelWeights<S>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SgdTrainer;

impl<S: Scalar> LocalTrainer<S> for SgdTrainer {
    fn update(
        &self,
        _ctx: &UpdateContext,
        start: &ModelWeights<S>,
        arch: &Architecture,
        data: &Batch<S>,
        cfg: &TrainingConfig<S>,
        seed: u64,
    ) -> Result<ModelWeights<S>> {
        train_local(start, arch, data, cfg, seed).map(|o| o.model)
    }
}

pub struct RoundContext<'a, S> {
    pub arch: &'a Architecture,
    /// 1-based round index.
    pub round: usize,
    pub trainer: &'a dyn LocalTrainer<S>,
}

impl<'a, S: Scalar> RoundContext<'a, S> {
    pub fn new(arch: &'a Architecture, round: usize) -> Self {
        Self {
            arch,
            round,
            trainer: &SgdTrainer,
        }
    }

    pub fn with_trainer(mut self, trainer: &'a dyn LocalTrainer<S>) -> Self {
        self.trainer = trainer;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome<S> {
    pub model: ModelWeights<S>,
    pub ledger: CommLedger,
    /// Mean `‖w_k − w_t‖` over clients after the main local update.
    pub drift: f64,
    /// No active clients; the server model is unchanged.
    pub skipped: bool,
}

impl<S: Scalar> RoundOutcome<S> {
    fn skipped(server: &ModelWeights<S>, round: usize) -> Self {
        log::warn!("round {round}: no active clients, skipping aggregation");
        Self {
            model: server.clone(),
            ledger: CommLedger::new(round, server.len()),
            drift: 0.0,
            skipped: true,
        }
    }
}

/// Seed of one local update, derived from the client's own seed.
pub fn update_seed(client_seed: u64, round: usize, phase: Phase) -> u64 {
    let code = match phase {
        Phase::Main => 0,
        Phase::LayerWise { layer } => layer as u64 + 1,
    };
    seed::derive(client_seed, &[seed::STREAM_TRAIN, round as u64, code])
}

/// `n_k / n` over the given clients, in order.
pub fn fractions<S: Scalar>(clients: &[ClientState<S>]) -> Result<Vec<f64>> {
    let n: usize = clients.iter().map(ClientState::n_k).sum();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "active clients hold no training examples".into(),
        ));
    }
    Ok(clients.iter().map(|c| c.n_k() as f64 / n as f64).collect())
}

pub(crate) fn client_config<S: Scalar>(
    base: &TrainingConfig<S>,
    client: &ClientState<S>,
) -> TrainingConfig<S> {
    let mut cfg = base.clone();
    if !client.class_weights.is_empty() {
        cfg.class_weights = client.class_weights.clone();
    }
    cfg
}

/// Every client starts from `server`, trains, and the results are averaged
/// with `n_k / n`. Client models are left at their trained state.
fn main_phase<S: Scalar>(
    server: &ModelWeights<S>,
    clients: &mut [ClientState<S>],
    ctx: &RoundContext<'_, S>,
    cfg: &TrainingConfig<S>,
    algorithm: Algorithm,
    ledger: &mut CommLedger,
) -> Result<(ModelWeights<S>, f64)> {
    let fractions = fractions(clients)?;
    clients.par_iter_mut().try_for_each(|c| -> Result<()> {
        let cfg = client_config(cfg, c);
        let uctx = UpdateContext {
            client: c.id,
            round: ctx.round,
            phase: Phase::Main,
        };
        let seed = update_seed(c.seed, ctx.round, Phase::Main);
        c.model = ctx
            .trainer
            .update(&uctx, server, ctx.arch, &c.train, &cfg, seed)?;
        Ok(())
    })?;
    let mut drift = 0.0;
    let mut bytes_up = 0;
    for c in clients.iter() {
        drift += c.model.distance(server)?.as_f64();
        bytes_up += fabric::byte_size(&c.model) as u64;
    }
    let averaged = weighted_average(
        &clients.iter().map(|c| &c.model).collect::<Vec<_>>(),
        &fractions,
    )?;
    ledger.record(RoundEvent {
        round: ctx.round,
        algorithm,
        phase: Phase::Main,
        layer: None,
        clients: clients.len(),
        units_added: 0,
        bytes_up,
        bytes_down: (fabric::byte_size(server) * clients.len()) as u64,
    });
    Ok((averaged, drift / clients.len() as f64))
}

fn plain_round<S: Scalar>(
    server: &ModelWeights<S>,
    clients: &mut [ClientState<S>],
    ctx: &RoundContext<'_, S>,
    cfg: &TrainingConfig<S>,
    algorithm: Algorithm,
) -> Result<RoundOutcome<S>> {
    if clients.is_empty() {
        return Ok(RoundOutcome::skipped(server, ctx.round));
    }
    let mut ledger = CommLedger::new(ctx.round, server.len());
    let (model, drift) = main_phase(server, clients, ctx, cfg, algorithm, &mut ledger)?;
    Ok(RoundOutcome {
        model,
        ledger,
        drift,
        skipped: false,
    })
}

/// One FedAvg round over the active `clients`. The proximal term of `cfg`
/// is ignored.
pub fn fedavg_round<S: Scalar>(
    server: &ModelWeights<S>,
    clients: &mut [ClientState<S>],
    ctx: &RoundContext<'_, S>,
    cfg: &TrainingConfig<S>,
) -> Result<RoundOutcome<S>> {
    let cfg = TrainingConfig {
        proximal_coefficient: S::zero(),
        reference_weights: None,
        ..cfg.clone()
    };
    plain_round(server, clients, ctx, &cfg, Algorithm::FedAvg)
}

/// FedAvg with each client minimizing `loss + μ/2 ‖w − w_t‖²`, where `w_t`
/// is the server model and `μ = cfg.proximal_coefficient`.
pub fn fedprox_round<S: Scalar>(
    server: &ModelWeights<S>,
    clients: &mut [ClientState<S>],
    ctx: &RoundContext<'_, S>,
    cfg: &TrainingConfig<S>,
) -> Result<RoundOutcome<S>> {
    let mu = cfg.proximal_coefficient;
    if !(mu >= S::zero()) {
        return Err(Error::InvalidArgument(format!(
            "proximal coefficient {mu} is negative"
        )));
    }
    let reference = (mu > S::zero()).then(|| server.clone());
    let cfg = TrainingConfig {
        reference_weights: reference,
        ..cfg.clone()
    };
    plain_round(server, clients, ctx, &cfg, Algorithm::FedProx)
}
