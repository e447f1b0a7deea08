use super::arch::Architecture;
use super::batch::Batch;
use super::layers::{forward, objective_and_gradient};
use super::train::{loss, TrainingConfig};
use crate::error::{Error, Result};
use crate::fabric::ModelWeights;
use crate::scalar::Scalar;

// Below this combined norm a tensor's gradient counts as zero.
const NORM_FLOOR: f64 = 1e-7;

fn objective<S: Scalar>(
    model: &ModelWeights<S>,
    arch: &Architecture,
    batch: &Batch<S>,
    cfg: &TrainingConfig<S>,
) -> Result<f64> {
    let probs = forward(model, arch, batch)?;
    let mut value = loss(&probs, &batch.labels, &cfg.class_weights)?.as_f64();
    if cfg.proximal_coefficient > S::zero() {
        let reference = cfg.reference_weights.as_ref().expect("validated");
        let mut sq = 0.0;
        for (l, r) in model
            .layers()
            .iter()
            .zip(reference.layers())
            .skip(cfg.frozen_prefix)
        {
            for (a, b) in l
                .weights()
                .iter()
                .chain(l.bias())
                .zip(r.weights().iter().chain(r.bias()))
            {
                sq += (*a - *b).as_f64().powi(2);
            }
        }
        value += cfg.proximal_coefficient.as_f64() * sq / 2.0;
    }
    Ok(value)
}

fn param_mut<S: Scalar>(
    m: &mut ModelWeights<S>,
    layer: usize,
    tensor: usize,
    idx: usize,
) -> &mut S {
    let layer = &mut m.layers_mut()[layer];
    if tensor == 0 {
        &mut layer.weights_mut()[idx]
    } else {
        &mut layer.bias_mut()[idx]
    }
}

/// Largest relative error, over every trainable parameter tensor, between
/// the analytic gradient and central finite differences. The error of one
/// tensor is `‖analytic − numeric‖ / (‖analytic‖ + ‖numeric‖)`, and is 0
/// when both norms fall below 1e-7.
pub fn gradient_check<S: Scalar>(
    model: &ModelWeights<S>,
    arch: &Architecture,
    batch: &Batch<S>,
    cfg: &TrainingConfig<S>,
    epsilon: f64,
) -> Result<f64> {
    gradient_check_sampled(model, arch, batch, cfg, epsilon, usize::MAX)
}

/// As [`gradient_check`], probing at most `max_entries` evenly strided
/// entries per tensor.
pub fn gradient_check_sampled<S: Scalar>(
    model: &ModelWeights<S>,
    arch: &Architecture,
    batch: &Batch<S>,
    cfg: &TrainingConfig<S>,
    epsilon: f64,
    max_entries: usize,
) -> Result<f64> {
    if !(epsilon > 1e-7 && epsilon < 1e-3) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} outside (1e-7, 1e-3)"
        )));
    }
    let (_, grads) = objective_and_gradient(model, arch, batch, cfg)?;
    let mut worst = 0.0f64;
    let mut probe = model.clone();
    for p in cfg.frozen_prefix..model.len() {
        for (tensor, name) in [(0usize, "weights"), (1, "bias")] {
            let analytic = if tensor == 0 {
                &grads.layers[p].0
            } else {
                &grads.layers[p].1
            };
            if analytic.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    param: format!("layer {p} {name}"),
                });
            }
            let stride = analytic.len().div_ceil(max_entries.max(1)).max(1);
            let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
            for idx in (0..analytic.len()).step_by(stride) {
                let original = *param_mut(&mut probe, p, tensor, idx);
                *param_mut(&mut probe, p, tensor, idx) = S::of(original.as_f64() + epsilon);
                let plus = objective(&probe, arch, batch, cfg)?;
                *param_mut(&mut probe, p, tensor, idx) = S::of(original.as_f64() - epsilon);
                let minus = objective(&probe, arch, batch, cfg)?;
                *param_mut(&mut probe, p, tensor, idx) = original;
                let numeric = (plus - minus) / (2.0 * epsilon);
                if !numeric.is_finite() {
                    return Err(Error::NonFiniteGradient {
                        param: format!("layer {p} {name}[{idx}] (numeric)"),
                    });
                }
                let a = analytic[idx].as_f64();
                diff += (a - numeric).powi(2);
                na += a * a;
                nn += numeric * numeric;
            }
            let (diff, na, nn) = (diff.sqrt(), na.sqrt(), nn.sqrt());
            if na + nn >= NORM_FLOOR {
                worst = worst.max(diff / (na + nn));
            }
        }
    }
    Ok(worst)
}
