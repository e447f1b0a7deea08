use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    client_config, distance_matrix, divergence_threshold, fractions, main_phase, select_divergent,
    update_seed, Algorithm, CommLedger, Phase, RoundContext, RoundEvent, RoundOutcome,
    UpdateContext,
};
use crate::client::ClientState;
use crate::error::{Error, Result};
use crate::fabric::{
    self, append_neuron, conform_to_shape, outgoing_rows, weighted_average_layers, GrowthRecord,
    LayerWeights, ModelWeights,
};
use crate::nn::TrainingConfig;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FedDistConfig {
    /// Growth rate of the threshold penalty `β·t`.
    pub beta: f64,
    pub base_sigma_multiplier: f64,
    /// Units appended per layer per round at most.
    pub max_new_units: usize,
    /// Local epochs of each layer-wise sub-round; `None` uses the main
    /// round's epochs.
    pub layerwise_epochs: Option<usize>,
}

impl Default for FedDistConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            base_sigma_multiplier: 3.0,
            max_new_units: 8,
            layerwise_epochs: None,
        }
    }
}

impl FedDistConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config(
                "feddist.beta",
                format!("{} must be a non-negative real", self.beta),
            ));
        }
        if !(self.base_sigma_multiplier > 0.0 && self.base_sigma_multiplier.is_finite()) {
            return Err(Error::config(
                "feddist.base_sigma_multiplier",
                format!("{} must be positive", self.base_sigma_multiplier),
            ));
        }
        if self.layerwise_epochs == Some(0) {
            return Err(Error::config(
                "feddist.layerwise_epochs",
                "must be at least 1",
            ));
        }
        Ok(())
    }
}

/// One FedDist round: a FedAvg main phase, then for every non-output layer
/// in order, growth from divergent client units followed (if anything grew)
/// by a sub-round that retrains the layers above with the grown prefix
/// frozen.
pub fn feddist_round<S: Scalar>(
    server: &ModelWeights<S>,
    clients: &mut [ClientState<S>],
    ctx: &RoundContext<'_, S>,
    cfg: &TrainingConfig<S>,
    fcfg: &FedDistConfig,
) -> Result<RoundOutcome<S>> {
    fcfg.validate()?;
    if clients.is_empty() {
        return Ok(RoundOutcome::skipped(server, ctx.round));
    }
    let cfg = TrainingConfig {
        proximal_coefficient: S::zero(),
        reference_weights: None,
        ..cfg.clone()
    };
    let mut ledger = CommLedger::new(ctx.round, server.len());
    let (mut model, drift) =
        main_phase(server, clients, ctx, &cfg, Algorithm::FedDist, &mut ledger)?;
    let fractions = fractions(clients)?;

    for l in 0..model.len().saturating_sub(1) {
        let layers = clients
            .iter()
            .map(|c| c.model.layer(l))
            .collect::<Result<Vec<&LayerWeights<S>>>>()?;
        let pi = distance_matrix(l, model.layer(l)?, &layers)?;
        let threshold = divergence_threshold(
            ctx.round,
            fcfg.beta,
            fcfg.base_sigma_multiplier,
            pi.mu,
            pi.sigma,
        );
        let selection = select_divergent(&pi, threshold, fcfg.max_new_units);
        ledger.capped += selection.capped;
        if selection.picks.is_empty() {
            continue;
        }

        let mut records = Vec::with_capacity(selection.picks.len());
        for pick in &selection.picks {
            let donor = &clients[pick.client].model;
            let source = donor.layer(l)?.neuron_vector(pick.unit)?;
            let rows = outgoing_rows(donor, l, pick.unit)?;
            let unit = model.layer(l)?.outputs();
            model = append_neuron(&model, l, &source, &rows)?;
            log::debug!(
                "round {}: layer {l} unit {} from client {} (distance {:.4} > {threshold:.4})",
                ctx.round,
                pick.unit,
                clients[pick.client].id,
                pick.distance
            );
            records.push(GrowthRecord {
                layer: l,
                unit,
                successor_rows: rows,
            });
        }
        ledger.units_added[l] += records.len();

        let phase = Phase::LayerWise { layer: l };
        let sub_cfg = TrainingConfig {
            local_epochs: fcfg.layerwise_epochs.unwrap_or(cfg.local_epochs),
            frozen_prefix: l + 1,
            ..cfg.clone()
        };
        let grown = &model;
        clients.par_iter_mut().try_for_each(|c| -> Result<()> {
            let start = conform_to_shape(&c.model, grown, l, &records)?;
            let uctx = UpdateContext {
                client: c.id,
                round: ctx.round,
                phase,
            };
            let seed = update_seed(c.seed, ctx.round, phase);
            c.model = ctx.trainer.update(
                &uctx,
                &start,
                ctx.arch,
                &c.train,
                &client_config(&sub_cfg, c),
                seed,
            )?;
            Ok(())
        })?;

        let row_values: usize = records.iter().map(|r| r.successor_rows.len()).sum();
        let down = fabric::payload_size(&model.layers()[..=l]) + row_values * S::BYTES;
        let up: usize = clients
            .iter()
            .map(|c| fabric::payload_size(&c.model.layers()[l + 1..]))
            .sum();
        let models: Vec<&ModelWeights<S>> = clients.iter().map(|c| &c.model).collect();
        model = weighted_average_layers(&model, &models, &fractions, l + 1..model.len())?;
        ledger.record(RoundEvent {
            round: ctx.round,
            algorithm: Algorithm::FedDist,
            phase,
            layer: Some(l),
            clients: clients.len(),
            units_added: records.len(),
            bytes_up: up as u64,
            bytes_down: (down * clients.len()) as u64,
        });
    }
    Ok(RoundOutcome {
        model,
        ledger,
        drift,
        skipped: false,
    })
}
