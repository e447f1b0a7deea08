use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::aggregation::{Algorithm, FedDistConfig};
use crate::data::{PipelineParams, SyntheticSpec, CHANNELS};
use crate::error::{Error, Result};
use crate::nn::{Architecture, LayerSpec, TrainingConfig};
use crate::scalar::{Precision, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    #[default]
    Full,
    Incrementing,
    Decrementing,
    Interchanging,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// Clients active in round 1 of an incrementing run.
    pub start_count: usize,
    /// Rounds between pool changes.
    pub interval_rounds: usize,
    /// Clients drawn per round when interchanging.
    pub sample_size: usize,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::Full,
            start_count: 2,
            interval_rounds: 14,
            sample_size: 8,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self, pool: usize) -> Result<()> {
        if self.interval_rounds == 0 {
            return Err(Error::config(
                "scenario.interval_rounds",
                "must be at least 1",
            ));
        }
        match self.kind {
            ScenarioKind::Incrementing if self.start_count == 0 || self.start_count > pool => {
                Err(Error::config(
                    "scenario.start_count",
                    format!("{} is outside 1..={pool}", self.start_count),
                ))
            }
            ScenarioKind::Interchanging if self.sample_size == 0 || self.sample_size > pool => {
                Err(Error::config(
                    "scenario.sample_size",
                    format!(
                        "{} is outside 1..={pool} (the client count)",
                        self.sample_size
                    ),
                ))
            }
            _ => Ok(()),
        }
    }
}

/// Local optimization settings as written in a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingParams {
    pub local_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Balanced per-client class weights instead of unit weights.
    pub class_weighting: bool,
    /// Only used by FedProx.
    pub proximal_coefficient: f64,
}

impl Default for TrainingParams {
    fn default() -> Self {
        Self {
            local_epochs: 5,
            learning_rate: 0.01,
            batch_size: 32,
            class_weighting: true,
            proximal_coefficient: 0.01,
        }
    }
}

impl TrainingParams {
    pub fn to_config<S: Scalar>(&self) -> TrainingConfig<S> {
        TrainingConfig {
            local_epochs: self.local_epochs,
            learning_rate: S::of(self.learning_rate),
            batch_size: self.batch_size,
            proximal_coefficient: S::of(self.proximal_coefficient),
            ..TrainingConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let key = |k: &str| format!("training.{k}");
        if self.local_epochs == 0 {
            return Err(Error::config(key("local_epochs"), "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(
                key("learning_rate"),
                format!("{} must be positive", self.learning_rate),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::config(key("batch_size"), "must be at least 1"));
        }
        if !(self.proximal_coefficient >= 0.0 && self.proximal_coefficient.is_finite()) {
            return Err(Error::config(
                key("proximal_coefficient"),
                "must be a non-negative real",
            ));
        }
        Ok(())
    }
}

/// Hidden layers; the softmax output sized to the class count is appended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub layers: Vec<LayerSpec>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: vec![LayerSpec::dense(32)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvDataConfig {
    /// One recording per client, in client-id order.
    pub files: Vec<PathBuf>,
    pub classes: usize,
    pub sample_rate: f64,
    #[serde(default)]
    pub target_rate: Option<f64>,
    #[serde(default)]
    pub pipeline: PipelineParams,
}

/// Exactly one source must be given.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<CsvDataConfig>,
}

impl DataConfig {
    pub fn clients(&self) -> usize {
        match (&self.synthetic, &self.csv) {
            (Some(s), _) => s.clients,
            (_, Some(c)) => c.files.len(),
            _ => 0,
        }
    }

    pub fn classes(&self) -> usize {
        match (&self.synthetic, &self.csv) {
            (Some(s), _) => s.classes,
            (_, Some(c)) => c.classes,
            _ => 0,
        }
    }

    pub fn pipeline(&self) -> PipelineParams {
        match (&self.synthetic, &self.csv) {
            (Some(s), _) => s.pipeline,
            (_, Some(c)) => c.pipeline,
            _ => PipelineParams::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        match (&self.synthetic, &self.csv) {
            (Some(s), None) => s.validate().map_err(|e| prefix("data.synthetic", e)),
            (None, Some(c)) => {
                if c.files.is_empty() {
                    return Err(Error::config("data.csv.files", "need at least one file"));
                }
                if c.classes < 2 {
                    return Err(Error::config(
                        "data.csv.classes",
                        format!("{} < 2", c.classes),
                    ));
                }
                crate::data::CsvSchema {
                    sample_rate: c.sample_rate,
                    target_rate: c.target_rate,
                }
                .factor()
                .map(|_| ())
                .map_err(|e| prefix("data.csv", e))
            }
            (Some(_), Some(_)) => Err(Error::config(
                "data",
                "give either `synthetic` or `csv`, not both",
            )),
            (None, None) => Err(Error::config(
                "data",
                "missing a `synthetic` or `csv` source",
            )),
        }
    }
}

fn prefix(path: &str, e: Error) -> Error {
    match e {
        Error::Config { key, message } => Error::config(format!("{path}.{key}"), message),
        other => other,
    }
}

/// One experiment. Every field except `algorithm` and `data` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
    /// Evaluate every this many rounds (and always after the last).
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainingParams,
    #[serde(default)]
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub feddist: FedDistConfig,
    pub data: DataConfig,
    /// Parameterized-layer widths that replace the model's own; used to
    /// rerun FedAvg at the size a FedDist run grew to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_shape: Option<Vec<usize>>,
}

fn default_rounds() -> usize {
    200
}

fn default_eval_every() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(algorithm: Algorithm, data: DataConfig) -> Self {
        Self {
            algorithm,
            rounds: default_rounds(),
            seed: 0,
            precision: Precision::default(),
            eval_every: 1,
            model: ModelConfig::default(),
            training: TrainingParams::default(),
            scenario: ScenarioSpec::default(),
            feddist: FedDistConfig::default(),
            data,
            final_shape: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn clients(&self) -> usize {
        self.data.clients()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::config("rounds", "must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be at least 1"));
        }
        self.data.validate()?;
        self.training.validate()?;
        self.scenario.validate(self.clients())?;
        self.feddist.validate()?;
        self.architecture().map(|_| ())
    }

    /// Input contract from the data pipeline, hidden layers from the model
    /// section (resized by `final_shape` if set), softmax over the classes.
    pub fn architecture(&self) -> Result<Architecture> {
        if self
            .model
            .layers
            .iter()
            .any(|l| l.kind == crate::nn::LayerKind::SoftmaxOutput)
        {
            return Err(Error::config(
                "model.layers",
                "the softmax output layer is added automatically",
            ));
        }
        let mut layers = self.model.layers.clone();
        layers.push(LayerSpec::softmax(self.data.classes()));
        let arch = Architecture::new(self.data.pipeline().window_len, CHANNELS, layers)
            .map_err(|e| Error::config("model.layers", e.to_string()))?;
        match &self.final_shape {
            Some(shape) => arch
                .with_widths(shape)
                .map_err(|e| Error::config("final_shape", e.to_string())),
            None => Ok(arch),
        }
    }
}
