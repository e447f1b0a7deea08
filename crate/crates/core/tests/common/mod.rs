#![allow(dead_code)]

use std::fmt::Display;
use std::io::Write;

use feddist::aggregation::{LocalTrainer, Phase, SgdTrainer, UpdateContext};
use feddist::client::ClientState;
use feddist::data::SyntheticSpec;
use feddist::scheduler::{DataConfig, ExperimentConfig, ModelConfig};
use feddist::{Algorithm, Architecture, Batch, LayerSpec, ModelWeights, Result, TrainingConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Writes straight to the process stderr so the line shows up even when
/// the test harness captures output.
pub fn verdict(n: u32, name: &str, pass: bool, detail: impl Display) {
    let line = format!(
        "criterion {n:>2} {} {name}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

pub fn random_batch(
    rng: &mut impl Rng,
    n: usize,
    window_len: usize,
    channels: usize,
    classes: usize,
) -> Batch<f64> {
    let inputs = (0..n * window_len * channels)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    Batch::new(inputs, labels, window_len, channels).unwrap()
}

pub fn client(
    id: usize,
    seed: u64,
    data: Batch<f64>,
    model: &ModelWeights<f64>,
) -> ClientState<f64> {
    ClientState::new(id, seed, data.clone(), data, model.clone())
}

/// Every parameter of a model in storage order, weights before bias.
pub fn flat(m: &ModelWeights<f64>) -> Vec<f64> {
    m.layers()
        .iter()
        .flat_map(|l| l.weights().iter().chain(l.bias()).copied())
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Dense-only forward pass written out with plain loops: ReLU on hidden
/// layers, softmax at the end. The input is flattened channel-major.
#[allow(clippy::needless_range_loop)]
pub fn dense_oracle(
    m: &ModelWeights<f64>,
    x: &[f64],
    window_len: usize,
    channels: usize,
) -> Vec<f64> {
    let mut act: Vec<f64> = (0..channels * window_len)
        .map(|j| x[(j % window_len) * channels + j / window_len])
        .collect();
    let last = m.len() - 1;
    for (p, l) in m.layers().iter().enumerate() {
        let (inp, out) = (l.inputs(), l.outputs());
        let mut y = l.bias().to_vec();
        for i in 0..inp {
            for o in 0..out {
                y[o] += l.weights()[i * out + o] * act[i];
            }
        }
        if p < last {
            y.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        act = y;
    }
    let m = act.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = act.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Main-phase updates return the start model, except that at `round`
/// client `target` gets `shift` added to unit `unit` of `layer`.
/// Layer-wise sub-rounds train with SGD.
pub struct DisplacementRig {
    pub target: usize,
    pub round: usize,
    pub layer: usize,
    pub unit: usize,
    pub shift: f64,
}

impl DisplacementRig {
    pub fn displaced(&self, start: &ModelWeights<f64>) -> ModelWeights<f64> {
        let mut layers = start.layers().to_vec();
        let l = &mut layers[self.layer];
        let v: Vec<f64> = l
            .neuron_vector(self.unit)
            .unwrap()
            .iter()
            .map(|x| x + self.shift)
            .collect();
        l.set_neuron_vector(self.unit, &v).unwrap();
        ModelWeights::new(layers).unwrap()
    }
}

impl LocalTrainer<f64> for DisplacementRig {
    fn update(
        &self,
        ctx: &UpdateContext,
        start: &ModelWeights<f64>,
        arch: &Architecture,
        data: &Batch<f64>,
        cfg: &TrainingConfig<f64>,
        seed: u64,
    ) -> Result<ModelWeights<f64>> {
        match ctx.phase {
            Phase::Main if ctx.client == self.target && ctx.round == self.round => {
                Ok(self.displaced(start))
            }
            Phase::Main => Ok(start.clone()),
            Phase::LayerWise { .. } => SgdTrainer.update(ctx, start, arch, data, cfg, seed),
        }
    }
}

/// Ten strongly non-IID synthetic clients, eight classes, one dense hidden
/// layer of 32 units.
pub fn heterogeneous_config(algorithm: Algorithm, seed: u64, rounds: usize) -> ExperimentConfig {
    let spec = SyntheticSpec {
        clients: 10,
        classes: 8,
        dirichlet_alpha: 0.1,
        ..Default::default()
    };
    let mut cfg = ExperimentConfig::new(
        algorithm,
        DataConfig {
            synthetic: Some(spec),
            csv: None,
        },
    );
    cfg.rounds = rounds;
    cfg.seed = seed;
    cfg.model = ModelConfig {
        layers: vec![LayerSpec::dense(32)],
    };
    cfg.training.local_epochs = 5;
    cfg
}

/// A small synthetic setup for fast end-to-end tests.
pub fn small_config(algorithm: Algorithm, clients: usize, rounds: usize) -> ExperimentConfig {
    let spec = SyntheticSpec {
        clients,
        classes: 4,
        windows_per_client: [16, 24],
        ..Default::default()
    };
    let mut cfg = ExperimentConfig::new(
        algorithm,
        DataConfig {
            synthetic: Some(spec),
            csv: None,
        },
    );
    cfg.rounds = rounds;
    cfg.seed = 3;
    cfg.model = ModelConfig {
        layers: vec![LayerSpec::dense(8)],
    };
    cfg.training.local_epochs = 2;
    cfg
}
