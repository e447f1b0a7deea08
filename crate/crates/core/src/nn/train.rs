use rand::seq::SliceRandom;

use super::arch::Architecture;
use super::batch::{Dataset, Matrix};
use super::layers::{accumulate, add_proximal, plan, Gradients};
use crate::error::{Error, Result};
use crate::fabric::ModelWeights;
use crate::scalar::Scalar;
use crate::seed;

/// Lower bound applied to the true-class probability before taking its log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Local optimization settings for one `train_local` call.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig<S> {
    pub local_epochs: usize,
    pub learning_rate: S,
    pub batch_size: usize,
    /// One positive weight per class; empty means unit weights.
    pub class_weights: Vec<S>,
    /// Leading parameterized layers excluded from updates.
    pub frozen_prefix: usize,
    /// `μ` in `μ/2 ‖w − reference‖²`; zero disables the term.
    pub proximal_coefficient: S,
    pub reference_weights: Option<ModelWeights<S>>,
}

impl<S: Scalar> Default for TrainingConfig<S> {
    fn default() -> Self {
        Self {
            local_epochs: 5,
            learning_rate: S::of(0.01),
            batch_size: 32,
            class_weights: Vec::new(),
            frozen_prefix: 0,
            proximal_coefficient: S::zero(),
            reference_weights: None,
        }
    }
}

impl<S: Scalar> TrainingConfig<S> {
    pub fn validate(&self, model: &ModelWeights<S>, arch: &Architecture) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.local_epochs == 0 {
            return bad("local_epochs must be at least 1".into());
        }
        if !(self.learning_rate >= S::zero()) || !self.learning_rate.is_finite() {
            return bad(format!(
                "learning rate {} is not a non-negative real",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.frozen_prefix > model.len() {
            return bad(format!(
                "frozen_prefix {} exceeds {} layers",
                self.frozen_prefix,
                model.len()
            ));
        }
        if !self.class_weights.is_empty() {
            if self.class_weights.len() != arch.classes() {
                return bad(format!(
                    "{} class weights for {} classes",
                    self.class_weights.len(),
                    arch.classes()
                ));
            }
            if self
                .class_weights
                .iter()
                .any(|w| !(*w > S::zero()) || !w.is_finite())
            {
                return bad("class weights must be positive".into());
            }
        }
        if !(self.proximal_coefficient >= S::zero()) {
            return bad("proximal coefficient must be non-negative".into());
        }
        if self.proximal_coefficient > S::zero() {
            match &self.reference_weights {
                None => return bad("proximal term enabled without reference weights".into()),
                Some(r) => {
                    if let Some(layer) = r.first_shape_divergence(model) {
                        return Err(Error::shape(
                            layer,
                            "reference weights differ in shape from the model",
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// `total / (classes · count_c)`; classes absent from `labels` get 1.
pub fn balanced_class_weights(labels: &[usize], classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    for &l in labels {
        if l < classes {
            counts[l] += 1;
        }
    }
    let total = labels.len() as f64;
    counts
        .iter()
        .map(|&c| {
            if c == 0 {
                1.0
            } else {
                total / (classes as f64 * c as f64)
            }
        })
        .collect()
}

/// Mean of `−w[label] · ln p[label]` over rows; probabilities are clamped
/// below by [`LOG_CLAMP`].
pub fn loss<S: Scalar>(
    probabilities: &Matrix<S>,
    labels: &[usize],
    class_weights: &[S],
) -> Result<S> {
    if labels.len() != probabilities.rows {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} rows",
            labels.len(),
            probabilities.rows
        )));
    }
    if labels.is_empty() {
        return Ok(S::zero());
    }
    let clamp = S::of(LOG_CLAMP);
    let mut total = S::zero();
    for (i, &label) in labels.iter().enumerate() {
        if label >= probabilities.cols {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range"
            )));
        }
        let w = if class_weights.is_empty() {
            S::one()
        } else {
            class_weights[label]
        };
        total -= w * probabilities.row(i)[label].max(clamp).ln();
    }
    Ok(total / S::of(labels.len() as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput<S> {
    pub model: ModelWeights<S>,
    /// Mean data loss of each epoch, measured during the epoch.
    pub epoch_losses: Vec<S>,
}

fn sgd_step<S: Scalar>(
    model: &mut ModelWeights<S>,
    grads: &Gradients<S>,
    lr: S,
    frozen: usize,
) -> Result<()> {
    for (p, (layer, (gw, gb))) in model
        .layers_mut()
        .iter_mut()
        .zip(&grads.layers)
        .enumerate()
        .skip(frozen)
    {
        if gw.iter().chain(gb).any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient {
                param: format!("layer {p}"),
            });
        }
        for (w, &g) in layer.weights_mut().iter_mut().zip(gw) {
            *w -= lr * g;
        }
        for (b, &g) in layer.bias_mut().iter_mut().zip(gb) {
            *b -= lr * g;
        }
    }
    Ok(())
}

/// Mini-batch SGD on a client's data. Batch order is reshuffled every epoch
/// from a stream seeded by `seed`; layers below `cfg.frozen_prefix` are
/// returned bit-identical.
pub fn train_local<S: Scalar>(
    model: &ModelWeights<S>,
    arch: &Architecture,
    data: &Dataset<S>,
    cfg: &TrainingConfig<S>,
    seed: u64,
) -> Result<TrainOutput<S>> {
    cfg.validate(model, arch)?;
    if data.is_empty() {
        return Ok(TrainOutput {
            model: model.clone(),
            epoch_losses: Vec::new(),
        });
    }
    if data.window_len != arch.window_len || data.channels != arch.channels {
        return Err(Error::shape(
            0,
            "dataset windows do not match the architecture input",
        ));
    }
    if let Some(l) = data.labels.iter().find(|&&l| l >= arch.classes()) {
        return Err(Error::InvalidArgument(format!("label {l} out of range")));
    }
    let steps = plan(arch, model)?;
    let mut rng = seed::rng(seed);
    let mut current = model.clone();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.local_epochs);
    let prox = cfg.proximal_coefficient > S::zero();
    for _ in 0..cfg.local_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = S::zero();
        for chunk in order.chunks(cfg.batch_size) {
            let mut grads = Gradients::zeros_like(&current);
            epoch_loss += accumulate(
                &steps,
                &current,
                arch,
                data,
                chunk,
                &cfg.class_weights,
                cfg.frozen_prefix,
                &mut grads,
            );
            if prox {
                let reference = cfg.reference_weights.as_ref().expect("validated");
                add_proximal(
                    &current,
                    reference,
                    cfg.proximal_coefficient,
                    cfg.frozen_prefix,
                    &mut grads,
                );
            }
            sgd_step(&mut current, &grads, cfg.learning_rate, cfg.frozen_prefix)?;
        }
        epoch_losses.push(epoch_loss / S::of(data.len() as f64));
    }
    Ok(TrainOutput {
        model: current,
        epoch_losses,
    })
}
