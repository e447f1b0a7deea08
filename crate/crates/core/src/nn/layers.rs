//! Forward and backward passes.
//!
//! Activations are stored channel-major (`[channels][time]`); dense layers
//! flatten them in that order, so the rows a conv filter feeds in the
//! following dense layer form one contiguous block.

use super::arch::{Architecture, LayerKind};
use super::batch::{Batch, Matrix};
use super::train::{TrainingConfig, LOG_CLAMP};
use crate::error::{Error, Result};
use crate::fabric::{LayerWeights, ModelWeights, ParamKind};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Step {
    kind: LayerKind,
    param: Option<usize>,
    relu: bool,
    kernel: usize,
    in_channels: usize,
    in_len: usize,
}

/// Resolves the architecture against actual weight shapes.
pub(crate) fn plan<S: Scalar>(arch: &Architecture, model: &ModelWeights<S>) -> Result<Vec<Step>> {
    let (mut channels, mut len) = (arch.channels, arch.window_len);
    let mut steps = Vec::with_capacity(arch.layers.len());
    let mut p = 0;
    for (idx, spec) in arch.layers.iter().enumerate() {
        let step = Step {
            kind: spec.kind,
            param: None,
            relu: spec.applies_relu(),
            kernel: spec.kernel,
            in_channels: channels,
            in_len: len,
        };
        match spec.kind {
            LayerKind::MaxPool1d => {
                if spec.kernel == 0 || spec.kernel > len {
                    return Err(Error::shape(
                        idx,
                        format!("pool {} over length {len}", spec.kernel),
                    ));
                }
                len /= spec.kernel;
                steps.push(step);
                continue;
            }
            kind => {
                let w = model.layer(p).map_err(|_| {
                    Error::shape(
                        idx,
                        "model has fewer parameterized layers than the architecture",
                    )
                })?;
                if Some(w.kind()) != kind.param_kind() {
                    return Err(Error::shape(
                        idx,
                        format!("expected {:?}, weights are {}", kind, w.kind().name()),
                    ));
                }
                if kind == LayerKind::Conv1d {
                    if w.kernel() != spec.kernel || w.inputs() != channels || len < w.kernel() {
                        return Err(Error::shape(
                            idx,
                            format!(
                                "conv weights {} against input {channels}×{len}",
                                w.shape_string()
                            ),
                        ));
                    }
                    len = len - w.kernel() + 1;
                } else {
                    if w.inputs() != channels * len {
                        return Err(Error::shape(
                            idx,
                            format!("dense fan-in {} against input {channels}×{len}", w.inputs()),
                        ));
                    }
                    len = 1;
                }
                channels = w.outputs();
                steps.push(Step {
                    param: Some(p),
                    ..step
                });
                p += 1;
            }
        }
    }
    if p != model.len() {
        return Err(Error::shape(
            arch.layers.len(),
            format!(
                "model has {} parameterized layers, architecture uses {p}",
                model.len()
            ),
        ));
    }
    Ok(steps)
}

fn check_batch<S: Scalar>(arch: &Architecture, batch: &Batch<S>) -> Result<()> {
    if batch.window_len != arch.window_len || batch.channels != arch.channels {
        return Err(Error::shape(
            0,
            format!(
                "input {}×{} but the model expects {}×{}",
                batch.window_len, batch.channels, arch.window_len, arch.channels
            ),
        ));
    }
    let classes = arch.classes();
    if let Some(l) = batch.labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidArgument(format!(
            "label {l} out of range for {classes} classes"
        )));
    }
    Ok(())
}

enum Cache<S> {
    Param {
        input: Vec<S>,
        output: Vec<S>,
    },
    Pool {
        argmax: Vec<usize>,
        input_size: usize,
    },
}

fn conv_forward<S: Scalar>(w: &LayerWeights<S>, x: &[S], in_len: usize) -> Vec<S> {
    let (k, c_in, c_out) = (w.kernel(), w.inputs(), w.outputs());
    let t_out = in_len - k + 1;
    let mut y = Vec::with_capacity(c_out * t_out);
    for &b in w.bias() {
        y.extend(std::iter::repeat_n(b, t_out));
    }
    let weights = w.weights();
    for kk in 0..k {
        for c in 0..c_in {
            let xs = &x[c * in_len + kk..c * in_len + kk + t_out];
            let row = &weights[(kk * c_in + c) * c_out..(kk * c_in + c + 1) * c_out];
            for (o, &wv) in row.iter().enumerate() {
                for (yv, &xv) in y[o * t_out..(o + 1) * t_out].iter_mut().zip(xs) {
                    *yv += wv * xv;
                }
            }
        }
    }
    y
}

fn dense_forward<S: Scalar>(w: &LayerWeights<S>, x: &[S]) -> Vec<S> {
    let out = w.outputs();
    let mut y = w.bias().to_vec();
    for (i, &xv) in x.iter().enumerate() {
        let row = &w.weights()[i * out..(i + 1) * out];
        for (yv, &wv) in y.iter_mut().zip(row) {
            *yv += xv * wv;
        }
    }
    y
}

fn pool_forward<S: Scalar>(
    x: &[S],
    channels: usize,
    in_len: usize,
    k: usize,
) -> (Vec<S>, Vec<usize>) {
    let t_out = in_len / k;
    let mut y = Vec::with_capacity(channels * t_out);
    let mut argmax = Vec::with_capacity(channels * t_out);
    for c in 0..channels {
        for t in 0..t_out {
            let start = c * in_len + t * k;
            let mut best = start;
            for i in start + 1..start + k {
                if x[i] > x[best] {
                    best = i;
                }
            }
            y.push(x[best]);
            argmax.push(best);
        }
    }
    (y, argmax)
}

fn softmax_in_place<S: Scalar>(z: &mut [S]) {
    let m = z.iter().copied().fold(S::neg_infinity(), S::max);
    let mut sum = S::zero();
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

fn to_channel_major<S: Scalar>(x: &[S], window_len: usize, channels: usize) -> Vec<S> {
    let mut out = vec![S::zero(); x.len()];
    for t in 0..window_len {
        for c in 0..channels {
            out[c * window_len + t] = x[t * channels + c];
        }
    }
    out
}

fn forward_example<S: Scalar>(
    steps: &[Step],
    model: &ModelWeights<S>,
    x: &[S],
    arch: &Architecture,
    mut caches: Option<&mut Vec<Cache<S>>>,
) -> Vec<S> {
    let mut act = to_channel_major(x, arch.window_len, arch.channels);
    for step in steps {
        let next = match (step.kind, step.param) {
            (LayerKind::MaxPool1d, _) => {
                let (y, argmax) = pool_forward(&act, step.in_channels, step.in_len, step.kernel);
                if let Some(c) = caches.as_deref_mut() {
                    c.push(Cache::Pool {
                        argmax,
                        input_size: act.len(),
                    });
                }
                y
            }
            (kind, Some(p)) => {
                let w = &model.layers()[p];
                let mut y = if kind == LayerKind::Conv1d {
                    conv_forward(w, &act, step.in_len)
                } else {
                    dense_forward(w, &act)
                };
                if step.relu {
                    y.iter_mut().for_each(|v| *v = v.max(S::zero()));
                }
                if let Some(c) = caches.as_deref_mut() {
                    c.push(Cache::Param {
                        input: std::mem::take(&mut act),
                        output: y.clone(),
                    });
                }
                y
            }
            _ => unreachable!("parameterized step without weights"),
        };
        act = next;
    }
    softmax_in_place(&mut act);
    act
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<S> {
    pub layers: Vec<(Vec<S>, Vec<S>)>,
}

impl<S: Scalar> Gradients<S> {
    pub fn zeros_like(model: &ModelWeights<S>) -> Self {
        Self {
            layers: model
                .layers()
                .iter()
                .map(|l| {
                    (
                        vec![S::zero(); l.weights().len()],
                        vec![S::zero(); l.bias().len()],
                    )
                })
                .collect(),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn backward_example<S: Scalar>(
    steps: &[Step],
    model: &ModelWeights<S>,
    caches: &[Cache<S>],
    probs: &[S],
    label: usize,
    coeff: S,
    frozen: usize,
    grads: &mut Gradients<S>,
) {
    let mut d: Vec<S> = probs.iter().map(|&p| p * coeff).collect();
    d[label] -= coeff;
    for (step, cache) in steps.iter().zip(caches).rev() {
        match (cache, step.param) {
            (Cache::Pool { argmax, input_size }, _) => {
                let mut dx = vec![S::zero(); *input_size];
                for (&src, &g) in argmax.iter().zip(&d) {
                    dx[src] += g;
                }
                d = dx;
            }
            (Cache::Param { input, output }, Some(p)) => {
                if p < frozen {
                    return;
                }
                if step.relu {
                    for (g, &o) in d.iter_mut().zip(output) {
                        if o <= S::zero() {
                            *g = S::zero();
                        }
                    }
                }
                let w = &model.layers()[p];
                let need_dx = p > frozen;
                let (gw, gb) = &mut grads.layers[p];
                d = if w.kind() == ParamKind::Conv1d {
                    conv_backward(w, input, step.in_len, &d, gw, gb, need_dx)
                } else {
                    dense_backward(w, input, &d, gw, gb, need_dx)
                };
                if !need_dx {
                    return;
                }
            }
            _ => unreachable!(),
        }
    }
}

fn dense_backward<S: Scalar>(
    w: &LayerWeights<S>,
    x: &[S],
    d: &[S],
    gw: &mut [S],
    gb: &mut [S],
    need_dx: bool,
) -> Vec<S> {
    let out = w.outputs();
    for (g, &dv) in gb.iter_mut().zip(d) {
        *g += dv;
    }
    let mut dx = if need_dx {
        vec![S::zero(); x.len()]
    } else {
        Vec::new()
    };
    for (i, &xv) in x.iter().enumerate() {
        let grow = &mut gw[i * out..(i + 1) * out];
        for (g, &dv) in grow.iter_mut().zip(d) {
            *g += xv * dv;
        }
        if need_dx {
            let row = &w.weights()[i * out..(i + 1) * out];
            dx[i] = row.iter().zip(d).map(|(&wv, &dv)| wv * dv).sum();
        }
    }
    dx
}

fn conv_backward<S: Scalar>(
    w: &LayerWeights<S>,
    x: &[S],
    in_len: usize,
    d: &[S],
    gw: &mut [S],
    gb: &mut [S],
    need_dx: bool,
) -> Vec<S> {
    let (k, c_in, c_out) = (w.kernel(), w.inputs(), w.outputs());
    let t_out = in_len - k + 1;
    for (o, g) in gb.iter_mut().enumerate() {
        *g += d[o * t_out..(o + 1) * t_out].iter().copied().sum();
    }
    let mut dx = if need_dx {
        vec![S::zero(); x.len()]
    } else {
        Vec::new()
    };
    for kk in 0..k {
        for c in 0..c_in {
            let base = c * in_len + kk;
            let xs = &x[base..base + t_out];
            for o in 0..c_out {
                let idx = (kk * c_in + c) * c_out + o;
                let ds = &d[o * t_out..(o + 1) * t_out];
                gw[idx] += xs.iter().zip(ds).map(|(&xv, &dv)| xv * dv).sum();
                if need_dx {
                    let wv = w.weights()[idx];
                    for (dxv, &dv) in dx[base..base + t_out].iter_mut().zip(ds) {
                        *dxv += wv * dv;
                    }
                }
            }
        }
    }
    dx
}

/// Class probabilities for every example in `batch`.
pub fn forward<S: Scalar>(
    model: &ModelWeights<S>,
    arch: &Architecture,
    batch: &Batch<S>,
) -> Result<Matrix<S>> {
    check_batch(arch, batch)?;
    let steps = plan(arch, model)?;
    let cols = arch.classes();
    let mut data = Vec::with_capacity(batch.len() * cols);
    for i in 0..batch.len() {
        data.extend(forward_example(&steps, model, batch.example(i), arch, None));
    }
    Ok(Matrix {
        rows: batch.len(),
        cols,
        data,
    })
}

/// Argmax class per example; ties go to the lowest class index.
pub fn evaluate<S: Scalar>(
    model: &ModelWeights<S>,
    arch: &Architecture,
    batch: &Batch<S>,
) -> Result<Vec<usize>> {
    let probs = forward(model, arch, batch)?;
    Ok((0..probs.rows).map(|i| argmax(probs.row(i))).collect())
}

pub(crate) fn argmax<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0;
    for (j, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = j;
        }
    }
    best
}

/// Accumulates the gradient of the mean class-weighted cross-entropy over
/// `indices` into `grads` and returns the summed (unnormalized) loss.
#[allow(clippy::too_many_arguments)]
pub(crate) fn accumulate<S: Scalar>(
    steps: &[Step],
    model: &ModelWeights<S>,
    arch: &Architecture,
    batch: &Batch<S>,
    indices: &[usize],
    class_weights: &[S],
    frozen: usize,
    grads: &mut Gradients<S>,
) -> S {
    let scale = S::one() / S::of(indices.len() as f64);
    let clamp = S::of(LOG_CLAMP);
    let mut loss = S::zero();
    let mut caches = Vec::with_capacity(steps.len());
    for &i in indices {
        caches.clear();
        let probs = forward_example(steps, model, batch.example(i), arch, Some(&mut caches));
        let label = batch.labels[i];
        let w = class_weights.get(label).copied().unwrap_or(S::one());
        loss -= w * probs[label].max(clamp).ln();
        backward_example(
            steps,
            model,
            &caches,
            &probs,
            label,
            w * scale,
            frozen,
            grads,
        );
    }
    loss
}

/// Adds the proximal gradient `μ (w − reference)` for trainable layers and
/// returns the proximal objective term `μ/2 ‖w − reference‖²`.
pub(crate) fn add_proximal<S: Scalar>(
    model: &ModelWeights<S>,
    reference: &ModelWeights<S>,
    coefficient: S,
    frozen: usize,
    grads: &mut Gradients<S>,
) -> S {
    let mut sq = S::zero();
    for (p, (layer, refl)) in model
        .layers()
        .iter()
        .zip(reference.layers())
        .enumerate()
        .skip(frozen)
    {
        let (gw, gb) = &mut grads.layers[p];
        for ((g, &w), &r) in gw
            .iter_mut()
            .chain(gb.iter_mut())
            .zip(layer.weights().iter().chain(layer.bias()))
            .zip(refl.weights().iter().chain(refl.bias()))
        {
            let diff = w - r;
            *g += coefficient * diff;
            sq += diff * diff;
        }
    }
    coefficient * sq / S::of(2.0)
}

/// Training objective on `batch` and its gradient with respect to every
/// trainable parameter (layers below `cfg.frozen_prefix` get zeros).
pub fn objective_and_gradient<S: Scalar>(
    model: &ModelWeights<S>,
    arch: &Architecture,
    batch: &Batch<S>,
    cfg: &TrainingConfig<S>,
) -> Result<(S, Gradients<S>)> {
    check_batch(arch, batch)?;
    cfg.validate(model, arch)?;
    let steps = plan(arch, model)?;
    let mut grads = Gradients::zeros_like(model);
    if batch.is_empty() {
        return Ok((S::zero(), grads));
    }
    let indices: Vec<usize> = (0..batch.len()).collect();
    let sum = accumulate(
        &steps,
        model,
        arch,
        batch,
        &indices,
        &cfg.class_weights,
        cfg.frozen_prefix,
        &mut grads,
    );
    let mut objective = sum / S::of(batch.len() as f64);
    if cfg.proximal_coefficient > S::zero() {
        let reference = cfg.reference_weights.as_ref().expect("validated");
        objective += add_proximal(
            model,
            reference,
            cfg.proximal_coefficient,
            cfg.frozen_prefix,
            &mut grads,
        );
    }
    Ok((objective, grads))
}
