use std::borrow::Borrow;
use std::ops::Range;

use super::{LayerWeights, ModelWeights};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const FRACTION_TOLERANCE: f64 = 1e-9;

fn check_fractions(count: usize, fractions: &[f64]) -> Result<()> {
    if count == 0 {
        return Err(Error::InvalidArgument("nothing to average".into()));
    }
    if fractions.len() != count {
        return Err(Error::InvalidArgument(format!(
            "{count} models but {} fractions",
            fractions.len()
        )));
    }
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(*f >= 0.0)) || (sum - 1.0).abs() > FRACTION_TOLERANCE {
        return Err(Error::Fractions { sum });
    }
    Ok(())
}

fn average_layer<S: Scalar, M: Borrow<ModelWeights<S>>>(
    models: &[M],
    fractions: &[S],
    idx: usize,
) -> LayerWeights<S> {
    let base = &models[0].borrow().layers[idx];
    let mut out = base.clone();
    // Offsets from the first model keep the average of identical inputs exact.
    for (model, &f) in models.iter().zip(fractions).skip(1) {
        let layer = &model.borrow().layers[idx];
        for ((dst, &src), &b) in out
            .weights
            .iter_mut()
            .zip(&layer.weights)
            .zip(&base.weights)
        {
            *dst += f * (src - b);
        }
        for ((dst, &src), &b) in out.bias.iter_mut().zip(&layer.bias).zip(&base.bias) {
            *dst += f * (src - b);
        }
    }
    out
}

fn check_layer_shapes<S: Scalar, M: Borrow<ModelWeights<S>>>(
    models: &[M],
    range: Range<usize>,
) -> Result<()> {
    let first = models[0].borrow();
    for m in &models[1..] {
        let m = m.borrow();
        if m.len() != first.len() {
            return Err(Error::shape(
                first.len().min(m.len()),
                "layer counts differ",
            ));
        }
        if let Some(idx) = range
            .clone()
            .find(|&i| !first.layers[i].same_shape(&m.layers[i]))
        {
            return Err(Error::shape(
                idx,
                format!(
                    "{} vs {}",
                    first.layers[idx].shape_string(),
                    m.layers[idx].shape_string()
                ),
            ));
        }
    }
    Ok(())
}

/// Parameter-wise `Σ fractions[k] · models[k]`.
///
/// All models must share one shape signature; fractions must be
/// non-negative and sum to 1 within 1e-9.
pub fn weighted_average<S: Scalar, M: Borrow<ModelWeights<S>>>(
    models: &[M],
    fractions: &[f64],
) -> Result<ModelWeights<S>> {
    check_fractions(models.len(), fractions)?;
    let depth = models[0].borrow().len();
    check_layer_shapes(models, 0..depth)?;
    let fr: Vec<S> = fractions.iter().map(|&f| S::of(f)).collect();
    let layers = (0..depth).map(|i| average_layer(models, &fr, i)).collect();
    Ok(ModelWeights::from_layers_unchecked(layers))
}

/// Averages only the layers in `range`; all other layers are copied from
/// `base`. Used when clients upload a suffix of the model.
pub fn weighted_average_layers<S: Scalar, M: Borrow<ModelWeights<S>>>(
    base: &ModelWeights<S>,
    models: &[M],
    fractions: &[f64],
    range: Range<usize>,
) -> Result<ModelWeights<S>> {
    check_fractions(models.len(), fractions)?;
    if range.end > base.len() {
        return Err(Error::IndexOutOfRange {
            index: range.end,
            len: base.len(),
        });
    }
    check_layer_shapes(models, range.clone())?;
    for m in models {
        if let Some(idx) = range
            .clone()
            .find(|&i| !base.layers[i].same_shape(&m.borrow().layers[i]))
        {
            return Err(Error::shape(
                idx,
                "uploaded layer differs from server layer",
            ));
        }
    }
    let fr: Vec<S> = fractions.iter().map(|&f| S::of(f)).collect();
    let mut out = base.clone();
    for i in range {
        out.layers[i] = average_layer(models, &fr, i);
    }
    Ok(out)
}
