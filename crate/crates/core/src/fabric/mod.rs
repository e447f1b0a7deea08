//! Weight containers and the structural operations federated aggregation
//! needs: neuron read-out, weighted averaging, tail growth and shape
//! conformance, plus the binary container used for storage and for
//! communication accounting.

mod average;
mod container;
mod growth;

pub use average::{weighted_average, weighted_average_layers};
pub use container::{
    byte_size, content_hash, from_bytes, layer_record_size, parse_shape_dump, payload_size,
    read_file, shape_dump, to_bytes, write_file, ShapeLine, CONTAINER_MAGIC, CONTAINER_VERSION,
    HEADER_BYTES, LAYER_HEADER_BYTES,
};
pub use growth::{append_neuron, conform_to_shape, outgoing_rows, successor_block, GrowthRecord};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// What a parameterized layer computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamKind {
    Dense,
    Conv1d,
    /// Dense layer whose logits feed the softmax; never grown.
    Output,
}

impl ParamKind {
    pub fn tag(self) -> u8 {
        match self {
            ParamKind::Dense => 1,
            ParamKind::Conv1d => 2,
            ParamKind::Output => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(ParamKind::Dense),
            2 => Some(ParamKind::Conv1d),
            3 => Some(ParamKind::Output),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamKind::Dense => "dense",
            ParamKind::Conv1d => "conv1d",
            ParamKind::Output => "softmax-output",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "dense" => Some(ParamKind::Dense),
            "conv1d" => Some(ParamKind::Conv1d),
            "softmax-output" => Some(ParamKind::Output),
            _ => None,
        }
    }
}

/// Parameters of one layer.
///
/// Incoming weights are stored row-major as `[kernel][inputs][outputs]`;
/// dense layers use `kernel = 1`, so their storage is the usual
/// `[inputs × outputs]` matrix. For conv layers `inputs` is the input
/// channel count.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<S> {
    kind: ParamKind,
    kernel: usize,
    inputs: usize,
    outputs: usize,
    weights: Vec<S>,
    bias: Vec<S>,
}

impl<S: Scalar> LayerWeights<S> {
    pub fn new(
        kind: ParamKind,
        kernel: usize,
        inputs: usize,
        outputs: usize,
        weights: Vec<S>,
        bias: Vec<S>,
    ) -> Result<Self> {
        if kernel == 0 || inputs == 0 || outputs == 0 {
            return Err(Error::InvalidArgument(format!(
                "layer dimensions must be positive (kernel {kernel}, inputs {inputs}, outputs {outputs})"
            )));
        }
        if kind != ParamKind::Conv1d && kernel != 1 {
            return Err(Error::InvalidArgument(format!(
                "{} layer with kernel {kernel}",
                kind.name()
            )));
        }
        if weights.len() != kernel * inputs * outputs {
            return Err(Error::InvalidArgument(format!(
                "expected {} weights, got {}",
                kernel * inputs * outputs,
                weights.len()
            )));
        }
        if bias.len() != outputs {
            return Err(Error::InvalidArgument(format!(
                "bias length {} differs from output width {outputs}",
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        Ok(Self {
            kind,
            kernel,
            inputs,
            outputs,
            weights,
            bias,
        })
    }

    pub fn zeros(kind: ParamKind, kernel: usize, inputs: usize, outputs: usize) -> Result<Self> {
        Self::new(
            kind,
            kernel,
            inputs,
            outputs,
            vec![S::zero(); kernel * inputs * outputs],
            vec![S::zero(); outputs],
        )
    }

    pub fn dense(inputs: usize, outputs: usize, weights: Vec<S>, bias: Vec<S>) -> Result<Self> {
        Self::new(ParamKind::Dense, 1, inputs, outputs, weights, bias)
    }

    pub fn kind(&self) -> ParamKind {
        self.kind
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn bias(&self) -> &[S] {
        &self.bias
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [S] {
        &mut self.weights
    }

    pub(crate) fn bias_mut(&mut self) -> &mut [S] {
        &mut self.bias
    }

    #[inline]
    pub fn index(&self, k: usize, i: usize, o: usize) -> usize {
        (k * self.inputs + i) * self.outputs + o
    }

    pub fn weight(&self, k: usize, i: usize, o: usize) -> S {
        self.weights[self.index(k, i, o)]
    }

    /// Incoming weights per unit, bias excluded.
    pub fn fan_in(&self) -> usize {
        self.kernel * self.inputs
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Flattened view of one unit: incoming weights in storage order
    /// (kernel position, then input), bias last.
    pub fn neuron_vector(&self, unit: usize) -> Result<Vec<S>> {
        if unit >= self.outputs {
            return Err(Error::IndexOutOfRange {
                index: unit,
                len: self.outputs,
            });
        }
        let mut values = Vec::with_capacity(self.fan_in() + 1);
        for k in 0..self.kernel {
            for i in 0..self.inputs {
                values.push(self.weight(k, i, unit));
            }
        }
        values.push(self.bias[unit]);
        Ok(values)
    }

    /// Inverse of [`neuron_vector`](Self::neuron_vector).
    pub fn set_neuron_vector(&mut self, unit: usize, values: &[S]) -> Result<()> {
        if unit >= self.outputs {
            return Err(Error::IndexOutOfRange {
                index: unit,
                len: self.outputs,
            });
        }
        if values.len() != self.fan_in() + 1 {
            return Err(Error::InvalidArgument(format!(
                "neuron vector length {} but layer expects {}",
                values.len(),
                self.fan_in() + 1
            )));
        }
        let mut it = values.iter();
        for k in 0..self.kernel {
            for i in 0..self.inputs {
                let idx = self.index(k, i, unit);
                self.weights[idx] = *it.next().unwrap();
            }
        }
        self.bias[unit] = *it.next().unwrap();
        Ok(())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.kernel == other.kernel
            && self.inputs == other.inputs
            && self.outputs == other.outputs
    }

    pub(crate) fn shape_string(&self) -> String {
        format!(
            "{} k{} {}→{}",
            self.kind.name(),
            self.kernel,
            self.inputs,
            self.outputs
        )
    }
}

/// Which model a neuron was read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Owner {
    Server,
    Client(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeuronOrigin {
    pub owner: Owner,
    pub layer: usize,
    pub unit: usize,
}

/// A unit's incoming weights concatenated with its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronVector<S> {
    pub values: Vec<S>,
    pub origin: NeuronOrigin,
}

impl<S: Scalar> NeuronVector<S> {
    pub fn read(model: &ModelWeights<S>, owner: Owner, layer: usize, unit: usize) -> Result<Self> {
        let values = model.layer(layer)?.neuron_vector(unit)?;
        Ok(Self {
            values,
            origin: NeuronOrigin { owner, layer, unit },
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Ordered parameterized layers of a network. Parameter-free layers
/// (pooling) live only in the architecture.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelWeights<S> {
    layers: Vec<LayerWeights<S>>,
}

impl<S: Scalar> ModelWeights<S> {
    pub fn new(layers: Vec<LayerWeights<S>>) -> Result<Self> {
        let model = Self { layers };
        model.check_adjacency()?;
        Ok(model)
    }

    pub(crate) fn from_layers_unchecked(layers: Vec<LayerWeights<S>>) -> Self {
        Self { layers }
    }

    fn check_adjacency(&self) -> Result<()> {
        for (idx, pair) in self.layers.windows(2).enumerate() {
            let (prev, next) = (&pair[0], &pair[1]);
            if prev.kind == ParamKind::Output {
                return Err(Error::shape(idx, "output layer must be last"));
            }
            let ok = match (prev.kind, next.kind) {
                (ParamKind::Conv1d, ParamKind::Conv1d) => next.inputs == prev.outputs,
                (ParamKind::Conv1d, _) => next.inputs % prev.outputs == 0,
                (_, ParamKind::Conv1d) => false,
                _ => next.inputs == prev.outputs,
            };
            if !ok {
                return Err(Error::shape(
                    idx + 1,
                    format!(
                        "{} cannot follow {}",
                        next.shape_string(),
                        prev.shape_string()
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> &[LayerWeights<S>] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [LayerWeights<S>] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<LayerWeights<S>> {
        self.layers
    }

    pub fn layer(&self, idx: usize) -> Result<&LayerWeights<S>> {
        self.layers.get(idx).ok_or(Error::IndexOutOfRange {
            index: idx,
            len: self.layers.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Output width of every parameterized layer.
    pub fn shape_signature(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.outputs).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerWeights::param_count).sum()
    }

    /// Index of the first layer whose shape differs from `other`'s.
    pub fn first_shape_divergence(&self, other: &Self) -> Option<usize> {
        let common = self.layers.len().min(other.layers.len());
        (0..common)
            .find(|&i| !self.layers[i].same_shape(&other.layers[i]))
            .or_else(|| (self.layers.len() != other.layers.len()).then_some(common))
    }

    /// Euclidean norm of the parameter difference.
    pub fn distance(&self, other: &Self) -> Result<S> {
        if let Some(layer) = self.first_shape_divergence(other) {
            return Err(Error::shape(layer, "models differ in shape"));
        }
        let mut acc = S::zero();
        for (a, b) in self.layers.iter().zip(&other.layers) {
            for (x, y) in a
                .weights
                .iter()
                .chain(&a.bias)
                .zip(b.weights.iter().chain(&b.bias))
            {
                let d = *x - *y;
                acc += d * d;
            }
        }
        Ok(acc.sqrt())
    }

    pub fn cast<T: Scalar>(&self) -> ModelWeights<T> {
        ModelWeights {
            layers: self
                .layers
                .iter()
                .map(|l| LayerWeights {
                    kind: l.kind,
                    kernel: l.kernel,
                    inputs: l.inputs,
                    outputs: l.outputs,
                    weights: l.weights.iter().map(|v| T::of(v.as_f64())).collect(),
                    bias: l.bias.iter().map(|v| T::of(v.as_f64())).collect(),
                })
                .collect(),
        }
    }
}
