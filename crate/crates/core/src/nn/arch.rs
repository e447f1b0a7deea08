use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fabric::{LayerWeights, ModelWeights, ParamKind};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Dense,
    Conv1d,
    #[serde(rename = "maxpool1d")]
    MaxPool1d,
    SoftmaxOutput,
}

impl LayerKind {
    pub fn is_parameterized(self) -> bool {
        self != LayerKind::MaxPool1d
    }

    pub fn param_kind(self) -> Option<ParamKind> {
        match self {
            LayerKind::Dense => Some(ParamKind::Dense),
            LayerKind::Conv1d => Some(ParamKind::Conv1d),
            LayerKind::SoftmaxOutput => Some(ParamKind::Output),
            LayerKind::MaxPool1d => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    None,
}

fn one() -> usize {
    1
}

/// One layer of an architecture. `width` is the unit (or filter) count
/// used at initialization; a grown model carries its own widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub kind: LayerKind,
    #[serde(default)]
    pub width: usize,
    #[serde(default = "one")]
    pub kernel: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl LayerSpec {
    pub fn dense(width: usize) -> Self {
        Self {
            kind: LayerKind::Dense,
            width,
            kernel: 1,
            activation: Activation::Relu,
        }
    }

    pub fn conv1d(filters: usize, kernel: usize) -> Self {
        Self {
            kind: LayerKind::Conv1d,
            width: filters,
            kernel,
            activation: Activation::Relu,
        }
    }

    pub fn maxpool(kernel: usize) -> Self {
        Self {
            kind: LayerKind::MaxPool1d,
            width: 0,
            kernel,
            activation: Activation::None,
        }
    }

    pub fn softmax(classes: usize) -> Self {
        Self {
            kind: LayerKind::SoftmaxOutput,
            width: classes,
            kernel: 1,
            activation: Activation::None,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub(crate) fn applies_relu(&self) -> bool {
        matches!(self.kind, LayerKind::Dense | LayerKind::Conv1d)
            && self.activation == Activation::Relu
    }
}

/// Input contract plus the ordered layer list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub window_len: usize,
    pub channels: usize,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    pub fn new(window_len: usize, channels: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        let arch = Self {
            window_len,
            channels,
            layers,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Architecture(msg));
        if self.window_len == 0 || self.channels == 0 {
            return bad("input window and channel count must be positive".into());
        }
        let Some(last) = self.layers.last() else {
            return bad("no layers".into());
        };
        if last.kind != LayerKind::SoftmaxOutput {
            return bad("the final layer must be softmax-output".into());
        }
        let mut len = self.window_len;
        let mut flat = false;
        for (i, l) in self.layers.iter().enumerate() {
            if l.kind == LayerKind::SoftmaxOutput && i + 1 != self.layers.len() {
                return bad(format!("layer {i}: softmax-output must be last"));
            }
            if l.kind.is_parameterized() && l.width == 0 {
                return bad(format!("layer {i}: width must be at least 1"));
            }
            if l.kernel == 0 {
                return bad(format!("layer {i}: kernel must be at least 1"));
            }
            match l.kind {
                LayerKind::Conv1d | LayerKind::MaxPool1d if flat => {
                    return bad(format!(
                        "layer {i}: convolution or pooling after a dense layer"
                    ));
                }
                LayerKind::Conv1d => {
                    if l.kernel > len {
                        return bad(format!(
                            "layer {i}: kernel {} exceeds sequence length {len}",
                            l.kernel
                        ));
                    }
                    len = len - l.kernel + 1;
                }
                LayerKind::MaxPool1d => {
                    if l.kernel > len {
                        return bad(format!(
                            "layer {i}: pool {} exceeds sequence length {len}",
                            l.kernel
                        ));
                    }
                    len /= l.kernel;
                }
                LayerKind::Dense | LayerKind::SoftmaxOutput => {
                    if l.kernel != 1 {
                        return bad(format!("layer {i}: dense layers take no kernel"));
                    }
                    flat = true;
                }
            }
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.width)
    }

    pub fn param_layer_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.kind.is_parameterized())
            .count()
    }

    pub fn input_size(&self) -> usize {
        self.window_len * self.channels
    }

    /// Initial widths of the parameterized layers.
    pub fn shape_signature(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter(|l| l.kind.is_parameterized())
            .map(|l| l.width)
            .collect()
    }

    /// Same layer kinds with parameterized widths replaced by `signature`.
    pub fn with_widths(&self, signature: &[usize]) -> Result<Self> {
        if signature.len() != self.param_layer_count() {
            return Err(Error::Architecture(format!(
                "shape has {} layers, architecture has {} parameterized layers",
                signature.len(),
                self.param_layer_count()
            )));
        }
        let mut widths = signature.iter();
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let mut l = *l;
                if l.kind.is_parameterized() {
                    l.width = *widths.next().unwrap();
                }
                l
            })
            .collect();
        Self::new(self.window_len, self.channels, layers)
    }

    /// Glorot-uniform weights and zero biases.
    pub fn init<S: Scalar>(&self, seed: u64) -> Result<ModelWeights<S>> {
        self.validate()?;
        let mut rng = seed::rng(seed);
        let (mut channels, mut len) = (self.channels, self.window_len);
        let mut layers = Vec::with_capacity(self.param_layer_count());
        for l in &self.layers {
            let (kind, kernel, inputs) = match l.kind {
                LayerKind::MaxPool1d => {
                    len /= l.kernel;
                    continue;
                }
                LayerKind::Conv1d => (ParamKind::Conv1d, l.kernel, channels),
                LayerKind::Dense => (ParamKind::Dense, 1, channels * len),
                LayerKind::SoftmaxOutput => (ParamKind::Output, 1, channels * len),
            };
            let limit = (6.0 / ((kernel * inputs + kernel * l.width) as f64)).sqrt();
            let weights = (0..kernel * inputs * l.width)
                .map(|_| S::of(rng.random_range(-limit..limit)))
                .collect();
            layers.push(LayerWeights::new(
                kind,
                kernel,
                inputs,
                l.width,
                weights,
                vec![S::zero(); l.width],
            )?);
            if l.kind == LayerKind::Conv1d {
                len = len - l.kernel + 1;
                channels = l.width;
            } else {
                channels = l.width;
                len = 1;
            }
        }
        ModelWeights::new(layers)
    }
}
