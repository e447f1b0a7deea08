use super::{LayerWeights, ModelWeights, ParamKind};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One unit appended to a server layer, with the successor-layer rows
/// that carry its output.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthRecord<S> {
    pub layer: usize,
    /// Index of the new unit in the grown layer.
    pub unit: usize,
    /// `successor_block × successor outputs`, row-major.
    pub successor_rows: Vec<S>,
}

fn successor_of<S: Scalar>(
    model: &ModelWeights<S>,
    layer: usize,
) -> Result<(&LayerWeights<S>, &LayerWeights<S>)> {
    let current = model.layer(layer)?;
    if current.kind() == ParamKind::Output {
        return Err(Error::Growth(format!(
            "layer {layer} is the softmax output layer"
        )));
    }
    let succ = model
        .layer(layer + 1)
        .map_err(|_| Error::Growth(format!("layer {layer} has no successor")))?;
    Ok((current, succ))
}

/// Successor-layer rows tied to one unit of `layer`: 1 for dense → dense,
/// the pooled time length for conv → dense (channel-major flattening) and
/// the kernel length for conv → conv.
pub fn successor_block<S: Scalar>(model: &ModelWeights<S>, layer: usize) -> Result<usize> {
    let (current, succ) = successor_of(model, layer)?;
    block_between(current.outputs(), succ, layer)
}

fn block_between<S: Scalar>(units: usize, succ: &LayerWeights<S>, layer: usize) -> Result<usize> {
    if succ.kind() == ParamKind::Conv1d {
        if succ.inputs() != units {
            return Err(Error::shape(
                layer + 1,
                "conv input channels differ from predecessor width",
            ));
        }
        Ok(succ.kernel())
    } else if succ.inputs().is_multiple_of(units) {
        Ok(succ.inputs() / units)
    } else {
        Err(Error::shape(
            layer + 1,
            "fan-in is not a multiple of predecessor width",
        ))
    }
}

/// The rows of `layer + 1` that read unit `unit` of `layer`, flattened as
/// `[block][successor outputs]`.
pub fn outgoing_rows<S: Scalar>(
    model: &ModelWeights<S>,
    layer: usize,
    unit: usize,
) -> Result<Vec<S>> {
    let (current, succ) = successor_of(model, layer)?;
    if unit >= current.outputs() {
        return Err(Error::IndexOutOfRange {
            index: unit,
            len: current.outputs(),
        });
    }
    let block = block_between(current.outputs(), succ, layer)?;
    let width = succ.outputs();
    let mut rows = Vec::with_capacity(block * width);
    if succ.kind() == ParamKind::Conv1d {
        for k in 0..block {
            let start = succ.index(k, unit, 0);
            rows.extend_from_slice(&succ.weights()[start..start + width]);
        }
    } else {
        let start = succ.index(0, unit * block, 0);
        rows.extend_from_slice(&succ.weights()[start..start + block * width]);
    }
    Ok(rows)
}

fn push_unit<S: Scalar>(layer: &LayerWeights<S>, source: &[S]) -> LayerWeights<S> {
    let out = layer.outputs() + 1;
    let mut weights = Vec::with_capacity(layer.kernel() * layer.inputs() * out);
    let mut src = source.iter();
    for k in 0..layer.kernel() {
        for i in 0..layer.inputs() {
            let start = layer.index(k, i, 0);
            weights.extend_from_slice(&layer.weights()[start..start + layer.outputs()]);
            weights.push(*src.next().unwrap());
        }
    }
    let mut bias = layer.bias().to_vec();
    bias.push(*src.next().unwrap());
    LayerWeights {
        weights,
        bias,
        outputs: out,
        ..layer.clone()
    }
}

fn push_successor_rows<S: Scalar>(
    succ: &LayerWeights<S>,
    block: usize,
    rows: &[S],
) -> LayerWeights<S> {
    let width = succ.outputs();
    if succ.kind() == ParamKind::Conv1d {
        let inputs = succ.inputs() + 1;
        let mut weights = Vec::with_capacity(succ.kernel() * inputs * width);
        for k in 0..succ.kernel() {
            let start = succ.index(k, 0, 0);
            weights.extend_from_slice(&succ.weights()[start..start + succ.inputs() * width]);
            weights.extend_from_slice(&rows[k * width..(k + 1) * width]);
        }
        LayerWeights {
            weights,
            inputs,
            ..succ.clone()
        }
    } else {
        let mut weights = succ.weights().to_vec();
        weights.extend_from_slice(rows);
        LayerWeights {
            weights,
            inputs: succ.inputs() + block,
            ..succ.clone()
        }
    }
}

/// Appends one unit at the tail of `layer` with incoming weights and bias
/// from `source`, and appends `successor_rows` to the next layer so the new
/// unit's output is consumed. Existing parameters are untouched.
pub fn append_neuron<S: Scalar>(
    model: &ModelWeights<S>,
    layer: usize,
    source: &[S],
    successor_rows: &[S],
) -> Result<ModelWeights<S>> {
    let (current, succ) = successor_of(model, layer)?;
    if source.len() != current.fan_in() + 1 {
        return Err(Error::Growth(format!(
            "source vector has {} values, layer {layer} units need {}",
            source.len(),
            current.fan_in() + 1
        )));
    }
    let block = block_between(current.outputs(), succ, layer)?;
    if successor_rows.len() != block * succ.outputs() {
        return Err(Error::Growth(format!(
            "successor rows have {} values, expected {block} × {}",
            successor_rows.len(),
            succ.outputs()
        )));
    }
    if source.iter().chain(successor_rows).any(|v| !v.is_finite()) {
        return Err(Error::Growth("non-finite values in appended unit".into()));
    }
    let grown = push_unit(current, source);
    let widened = push_successor_rows(succ, block, successor_rows);
    let mut layers = model.layers().to_vec();
    layers[layer] = grown;
    layers[layer + 1] = widened;
    Ok(ModelWeights::from_layers_unchecked(layers))
}

/// Makes a client model dimension-compatible with a server that grew at
/// `layer`: layers up to and including `layer` become the server's, and the
/// client's successor layer receives the server's rows for every unit it
/// does not have yet. Upper layers otherwise keep the client's values.
pub fn conform_to_shape<S: Scalar>(
    client: &ModelWeights<S>,
    server: &ModelWeights<S>,
    layer: usize,
    grown: &[GrowthRecord<S>],
) -> Result<ModelWeights<S>> {
    if client.len() != server.len() {
        return Err(Error::Growth(format!(
            "client has {} layers, server has {}",
            client.len(),
            server.len()
        )));
    }
    if layer >= server.len() {
        return Err(Error::IndexOutOfRange {
            index: layer,
            len: server.len(),
        });
    }
    if let Some(r) = grown.iter().find(|r| r.layer != layer) {
        return Err(Error::Growth(format!(
            "record for layer {} in a layer-{layer} conform",
            r.layer
        )));
    }
    for i in 0..=layer {
        if client.layers[i].kind() != server.layers[i].kind()
            || client.layers[i].kernel() != server.layers[i].kernel()
        {
            return Err(Error::Growth(format!(
                "layer {i} kind differs between client and server"
            )));
        }
    }
    for i in layer + 2..server.len() {
        if !client.layers[i].same_shape(&server.layers[i]) {
            return Err(Error::Growth(format!(
                "layer {i} differs in shape above the successor"
            )));
        }
    }

    let mut layers = client.layers().to_vec();
    layers[..=layer].clone_from_slice(&server.layers()[..=layer]);
    if layer + 1 == server.len() {
        return Ok(ModelWeights::from_layers_unchecked(layers));
    }

    let target_units = server.layers[layer].outputs();
    let block = block_between(target_units, &server.layers[layer + 1], layer)?;
    let (srv_succ, cli_succ) = (&server.layers[layer + 1], &layers[layer + 1]);
    if cli_succ.kind() != srv_succ.kind()
        || cli_succ.kernel() != srv_succ.kernel()
        || cli_succ.outputs() != srv_succ.outputs()
    {
        return Err(Error::Growth(format!(
            "successor layer {} differs beyond its fan-in",
            layer + 1
        )));
    }
    let unit_inputs = |l: &LayerWeights<S>| {
        if l.kind() == ParamKind::Conv1d {
            l.inputs()
        } else {
            l.inputs() / block
        }
    };
    if cli_succ.kind() != ParamKind::Conv1d && cli_succ.inputs() % block != 0 {
        return Err(Error::Growth(
            "client successor fan-in is not a whole number of units".into(),
        ));
    }

    let mut have = unit_inputs(cli_succ);
    let mut records: Vec<&GrowthRecord<S>> = grown.iter().collect();
    records.sort_by_key(|r| r.unit);
    let mut succ = layers[layer + 1].clone();
    for r in records {
        if r.unit < have {
            continue;
        }
        if r.unit != have {
            return Err(Error::Growth(format!(
                "unit {} leaves a gap after {have} units",
                r.unit
            )));
        }
        if r.successor_rows.len() != block * succ.outputs() {
            return Err(Error::Growth(format!(
                "unit {} carries {} successor values",
                r.unit,
                r.successor_rows.len()
            )));
        }
        succ = push_successor_rows(&succ, block, &r.successor_rows);
        have += 1;
    }
    if have != target_units {
        return Err(Error::Growth(format!(
            "client successor reads {have} units but server layer {layer} has {target_units}"
        )));
    }
    layers[layer + 1] = succ;
    Ok(ModelWeights::from_layers_unchecked(layers))
}
