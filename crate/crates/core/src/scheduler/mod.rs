//! Round loop over a client pool: scenarios, baselines and reports.

mod config;

pub use config::{
    CsvDataConfig, DataConfig, ExperimentConfig, ModelConfig, ScenarioKind, ScenarioSpec,
    TrainingParams,
};

use rayon::prelude::*;

use crate::aggregation::{
    fedavg_round, feddist_round, fedprox_round, update_seed, Algorithm, CommLedger, LocalTrainer,
    Phase, RoundContext, SgdTrainer, UpdateContext,
};
use crate::client::ClientState;
use crate::data::ClientData;
use crate::error::{Error, Result};
use crate::fabric::ModelWeights;
use crate::metrics::{
    evaluate_generalization, evaluate_global, evaluate_personalization, RoundReport,
};
use crate::nn::{balanced_class_weights, train_local, Architecture, Batch, TrainingConfig};
use crate::scalar::Scalar;
use crate::seed;

/// Ids active in round `t` (1-based), ascending.
pub fn active_clients(
    spec: &ScenarioSpec,
    round: usize,
    pool: usize,
    global_seed: u64,
) -> Vec<usize> {
    let steps = round.saturating_sub(1) / spec.interval_rounds.max(1);
    let count = match spec.kind {
        ScenarioKind::Full => pool,
        ScenarioKind::Incrementing => pool.min(spec.start_count + steps),
        ScenarioKind::Decrementing => pool.saturating_sub(steps).max(1).min(pool),
        ScenarioKind::Interchanging => {
            let mut rng = seed::rng(seed::derive(
                global_seed,
                &[seed::STREAM_SCENARIO, round as u64],
            ));
            let mut ids =
                rand::seq::index::sample(&mut rng, pool, spec.sample_size.min(pool)).into_vec();
            ids.sort_unstable();
            return ids;
        }
    };
    (0..count).collect()
}

/// Result of a whole run.
#[derive(Debug, Clone)]
pub struct Experiment<S> {
    pub reports: Vec<RoundReport>,
    pub ledgers: Vec<CommLedger>,
    /// Server model for federated and centralized runs, client 0's model
    /// for local-only runs.
    pub final_model: ModelWeights<S>,
    pub clients: Vec<ClientState<S>>,
    pub arch: Architecture,
}

/// Builds client states with their data cast to `S`.
pub fn build_clients<S: Scalar>(
    cfg: &ExperimentConfig,
    data: &[ClientData],
    initial: &ModelWeights<S>,
) -> Vec<ClientState<S>> {
    let classes = cfg.data.classes();
    data.iter()
        .map(|d| {
            let mut c = ClientState::new(
                d.id,
                seed::derive(cfg.seed, &[seed::STREAM_CLIENT, d.id as u64]),
                d.train.cast(),
                d.test.cast(),
                initial.clone(),
            );
            if cfg.training.class_weighting {
                c.class_weights = balanced_class_weights(&d.train.labels, classes)
                    .into_iter()
                    .map(S::of)
                    .collect();
            }
            c
        })
        .collect()
}

fn initial_model<S: Scalar>(
    cfg: &ExperimentConfig,
    arch: &Architecture,
) -> Result<ModelWeights<S>> {
    let stream = if cfg.final_shape.is_some() {
        seed::STREAM_ABLATION
    } else {
        seed::STREAM_INIT
    };
    arch.init(seed::derive(cfg.seed, &[stream]))
}

pub fn run_experiment<S: Scalar>(
    cfg: &ExperimentConfig,
    data: &[ClientData],
) -> Result<Experiment<S>> {
    run_experiment_with(cfg, data, &SgdTrainer, &mut |_| Ok(()))
}

/// FedAvg from a fresh initialization with the parameterized widths of
/// `final_shape`, typically taken from a finished FedDist run.
pub fn rerun_with_final_shape<S: Scalar>(
    cfg: &ExperimentConfig,
    final_shape: &[usize],
    data: &[ClientData],
) -> Result<Experiment<S>> {
    let cfg = ExperimentConfig {
        algorithm: Algorithm::FedAvg,
        final_shape: Some(final_shape.to_vec()),
        ..cfg.clone()
    };
    run_experiment(&cfg, data)
}

/// Runs `cfg.rounds` rounds, calling `on_report` at every evaluation tick.
/// An error from a round or the callback ends the run; reports already
/// handed to `on_report` stand.
pub fn run_experiment_with<S: Scalar>(
    cfg: &ExperimentConfig,
    data: &[ClientData],
    trainer: &dyn LocalTrainer<S>,
    on_report: &mut dyn FnMut(&RoundReport) -> Result<()>,
) -> Result<Experiment<S>> {
    cfg.validate()?;
    if data.len() != cfg.clients() {
        return Err(Error::config(
            "data",
            format!(
                "{} client datasets for {} clients",
                data.len(),
                cfg.clients()
            ),
        ));
    }
    let arch = cfg.architecture()?;
    let mut server = initial_model::<S>(cfg, &arch)?;
    let mut clients = build_clients(cfg, data, &server);
    let global_test: Batch<S> = Batch::concat(clients.iter().map(|c| &c.test))?;
    let pooled_train: Batch<S> = if cfg.algorithm == Algorithm::Centralized {
        Batch::concat(clients.iter().map(|c| &c.train))?
    } else {
        Batch::empty(arch.window_len, arch.channels)
    };
    let base_cfg: TrainingConfig<S> = cfg.training.to_config();
    let mut reports = Vec::new();
    let mut ledgers = Vec::new();

    for t in 1..=cfg.rounds {
        let active = active_clients(&cfg.scenario, t, clients.len(), cfg.seed);
        for c in clients.iter_mut() {
            c.active = active.binary_search(&c.id).is_ok();
        }
        let ctx = RoundContext {
            arch: &arch,
            round: t,
            trainer,
        };
        let (mut pool, idle): (Vec<_>, Vec<_>) = std::mem::take(&mut clients)
            .into_iter()
            .partition(|c| c.active);
        let round = match cfg.algorithm {
            Algorithm::FedAvg => fedavg_round(&server, &mut pool, &ctx, &base_cfg).map(Some),
            Algorithm::FedProx => fedprox_round(&server, &mut pool, &ctx, &base_cfg).map(Some),
            Algorithm::FedDist => {
                feddist_round(&server, &mut pool, &ctx, &base_cfg, &cfg.feddist).map(Some)
            }
            Algorithm::LocalOnly => local_round(&mut pool, &ctx, &base_cfg).map(|_| None),
            Algorithm::Centralized => {
                centralized_round(&server, &pooled_train, cfg, &ctx, &base_cfg).map(|m| {
                    server = m;
                    None
                })
            }
        };
        clients = pool;
        clients.extend(idle);
        clients.sort_by_key(|c| c.id);
        let ledger = match round? {
            Some(outcome) => {
                server = outcome.model;
                let mut ledger = outcome.ledger;
                ledger.round = t;
                (Some(outcome.drift), ledger)
            }
            None => (None, CommLedger::new(t, server.len())),
        };
        let (drift, ledger) = ledger;

        if t % cfg.eval_every == 0 || t == cfg.rounds {
            let report = evaluate_round(
                cfg,
                &arch,
                t,
                &server,
                &mut clients,
                &global_test,
                &ledger,
                drift,
            )?;
            on_report(&report)?;
            reports.push(report);
        }
        ledgers.push(ledger);
    }
    let final_model = if cfg.algorithm == Algorithm::LocalOnly {
        clients[0].model.clone()
    } else {
        server
    };
    Ok(Experiment {
        reports,
        ledgers,
        final_model,
        clients,
        arch,
    })
}

/// Each active client continues from its own model with no aggregation.
fn local_round<S: Scalar>(
    pool: &mut [ClientState<S>],
    ctx: &RoundContext<'_, S>,
    cfg: &TrainingConfig<S>,
) -> Result<()> {
    pool.par_iter_mut().try_for_each(|c| {
        let mut cfg = cfg.clone();
        cfg.proximal_coefficient = S::zero();
        if !c.class_weights.is_empty() {
            cfg.class_weights = c.class_weights.clone();
        }
        let uctx = UpdateContext {
            client: c.id,
            round: ctx.round,
            phase: Phase::Main,
        };
        let seed = update_seed(c.seed, ctx.round, Phase::Main);
        c.model = ctx
            .trainer
            .update(&uctx, &c.model, ctx.arch, &c.train, &cfg, seed)?;
        Ok(())
    })
}

/// One model trained for E epochs on the pooled training data.
fn centralized_round<S: Scalar>(
    model: &ModelWeights<S>,
    pooled: &Batch<S>,
    cfg: &ExperimentConfig,
    ctx: &RoundContext<'_, S>,
    base: &TrainingConfig<S>,
) -> Result<ModelWeights<S>> {
    let mut train_cfg = TrainingConfig {
        proximal_coefficient: S::zero(),
        ..base.clone()
    };
    if cfg.training.class_weighting {
        train_cfg.class_weights = balanced_class_weights(&pooled.labels, ctx.arch.classes())
            .into_iter()
            .map(S::of)
            .collect();
    }
    let seed = seed::derive(cfg.seed, &[seed::STREAM_TRAIN, ctx.round as u64]);
    train_local(model, ctx.arch, pooled, &train_cfg, seed).map(|o| o.model)
}

#[allow(clippy::too_many_arguments)]
fn evaluate_round<S: Scalar>(
    cfg: &ExperimentConfig,
    arch: &Architecture,
    round: usize,
    server: &ModelWeights<S>,
    clients: &mut [ClientState<S>],
    global_test: &Batch<S>,
    ledger: &CommLedger,
    drift: Option<f64>,
) -> Result<RoundReport> {
    let active_ids: Vec<usize> = clients.iter().filter(|c| c.active).map(|c| c.id).collect();
    let per_client = cfg.algorithm != Algorithm::Centralized;
    let (personalization, generalization) = if per_client {
        let active: Vec<&ClientState<S>> = clients.iter().filter(|c| c.active).collect();
        let pers = evaluate_personalization(&active, arch)?;
        for &(id, score) in &pers.per_client {
            if let Some(c) = clients.iter_mut().find(|c| c.id == id) {
                c.offer_best(score, round);
            }
        }
        let all: Vec<&ClientState<S>> = clients.iter().collect();
        let generalization = evaluate_generalization(&all, arch, global_test)?;
        (Some(pers), Some(generalization))
    } else {
        (None, None)
    };
    let global = match cfg.algorithm {
        Algorithm::LocalOnly => None,
        _ => Some(evaluate_global(server, arch, global_test)?),
    };
    let shape_model = if cfg.algorithm == Algorithm::LocalOnly {
        &clients[0].model
    } else {
        server
    };
    Ok(RoundReport {
        round,
        algorithm: cfg.algorithm,
        global,
        personalization,
        generalization,
        params: shape_model.param_count(),
        shape: shape_model.shape_signature(),
        active_clients: active_ids,
        bytes_up: ledger.bytes_up,
        bytes_down: ledger.bytes_down,
        sub_rounds: ledger.sub_rounds,
        units_added: ledger.units_added.clone(),
        drift,
    })
}
