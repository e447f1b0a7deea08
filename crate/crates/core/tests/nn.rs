mod common;

use common::*;
use feddist::nn::{evaluate, forward, train_local};
use feddist::{Architecture, Batch, LayerSpec, ModelWeights, TrainingConfig};
use proptest::prelude::*;
use rand::Rng;

/// Two-dimensional points labelled by a hidden line, with a margin.
fn separable_set(seed: u64, n: usize) -> Batch<f64> {
    let mut r = rng(seed);
    let angle: f64 = r.random_range(0.0..std::f64::consts::TAU);
    let (a, b) = (angle.cos(), angle.sin());
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    while labels.len() < n {
        let (x, y): (f64, f64) = (r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        let side = a * x + b * y - 0.1;
        if side.abs() < 0.1 {
            continue;
        }
        inputs.extend([x, y]);
        labels.push(usize::from(side > 0.0));
    }
    Batch::new(inputs, labels, 2, 1).unwrap()
}

/// Searches a grid of lines for one that splits the set exactly.
fn exhaustively_separable(batch: &Batch<f64>) -> bool {
    (0..720).any(|step| {
        let angle = step as f64 * std::f64::consts::TAU / 720.0;
        let (a, b) = (angle.cos(), angle.sin());
        (-150..=150).any(|c| {
            let c = c as f64 / 100.0;
            (0..batch.len()).all(|i| {
                let x = batch.example(i);
                (a * x[0] + b * x[1] > c) == (batch.labels[i] == 1)
            })
        })
    })
}

#[test]
fn separable_toy_is_learned() {
    let arch = Architecture::new(2, 1, vec![LayerSpec::dense(8), LayerSpec::softmax(2)]).unwrap();
    for seed in 0..3 {
        let data = separable_set(seed, 80);
        assert!(exhaustively_separable(&data));
        let model: ModelWeights<f64> = arch.init(seed).unwrap();
        let cfg = TrainingConfig {
            local_epochs: 50,
            learning_rate: 0.1,
            batch_size: 8,
            ..Default::default()
        };
        let out = train_local(&model, &arch, &data, &cfg, seed).unwrap();
        assert_eq!(out.epoch_losses.len(), 50);
        let pred = evaluate(&out.model, &arch, &data).unwrap();
        let acc = pred
            .iter()
            .zip(&data.labels)
            .filter(|(p, l)| p == l)
            .count() as f64
            / 80.0;
        assert!(acc >= 0.95, "seed {seed}: accuracy {acc}");
    }
}

fn conv_arch() -> Architecture {
    Architecture::new(
        10,
        2,
        vec![
            LayerSpec::conv1d(3, 3),
            LayerSpec::maxpool(2),
            LayerSpec::dense(4),
            LayerSpec::softmax(3),
        ],
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn frozen_layers_are_bit_identical(seed in any::<u64>(), frozen in 0usize..=3) {
        let arch = conv_arch();
        let model: ModelWeights<f64> = arch.init(seed).unwrap();
        let data = random_batch(&mut rng(seed), 12, 10, 2, 3);
        let cfg = TrainingConfig { frozen_prefix: frozen, learning_rate: 0.2, local_epochs: 2, batch_size: 5, ..Default::default() };
        let out = train_local(&model, &arch, &data, &cfg, seed).unwrap();
        for l in 0..frozen {
            prop_assert_eq!(&out.model.layers()[l], &model.layers()[l]);
        }
        if frozen < 3 {
            prop_assert_ne!(&out.model.layers()[2], &model.layers()[2]);
        }
    }

    #[test]
    fn training_is_deterministic(seed in any::<u64>()) {
        let arch = conv_arch();
        let model: ModelWeights<f64> = arch.init(seed).unwrap();
        let data = random_batch(&mut rng(seed), 9, 10, 2, 3);
        let cfg = TrainingConfig { learning_rate: 0.1, local_epochs: 2, batch_size: 4, ..Default::default() };
        prop_assert_eq!(
            train_local(&model, &arch, &data, &cfg, 3).unwrap(),
            train_local(&model, &arch, &data, &cfg, 3).unwrap()
        );
    }

    #[test]
    fn zero_proximal_coefficient_ignores_reference(seed in any::<u64>()) {
        let arch = conv_arch();
        let model: ModelWeights<f64> = arch.init(seed).unwrap();
        let data = random_batch(&mut rng(seed), 9, 10, 2, 3);
        let plain = TrainingConfig { learning_rate: 0.1, local_epochs: 2, batch_size: 4, ..Default::default() };
        let with_reference = TrainingConfig { reference_weights: Some(arch.init(seed ^ 1).unwrap()), ..plain.clone() };
        prop_assert_eq!(
            train_local(&model, &arch, &data, &plain, 5).unwrap(),
            train_local(&model, &arch, &data, &with_reference, 5).unwrap()
        );
    }
}

#[test]
fn softmax_rows_sum_to_one() {
    let arch = conv_arch();
    let mut r = rng(11);
    let mut rows = 0;
    for seed in 0..50 {
        let model: ModelWeights<f64> = arch.init(seed).unwrap();
        let mut batch = random_batch(&mut r, 25, 10, 2, 3);
        batch.inputs.iter_mut().for_each(|v| *v *= 20.0);
        let probs = forward(&model, &arch, &batch).unwrap();
        for i in 0..probs.rows {
            let sum: f64 = probs.row(i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
            assert!(probs.row(i).iter().all(|p| (0.0..=1.0).contains(p)));
            rows += 1;
        }
    }
    assert!(rows >= 1000);
}

#[test]
fn proximal_pull_shrinks_distance_to_reference() {
    let arch = conv_arch();
    let model: ModelWeights<f64> = arch.init(1).unwrap();
    let data = random_batch(&mut rng(1), 20, 10, 2, 3);
    let base = TrainingConfig {
        learning_rate: 0.05,
        local_epochs: 5,
        batch_size: 5,
        ..Default::default()
    };
    let free = train_local(&model, &arch, &data, &base, 2).unwrap().model;
    let pulled = TrainingConfig {
        proximal_coefficient: 5.0,
        reference_weights: Some(model.clone()),
        ..base
    };
    let held = train_local(&model, &arch, &data, &pulled, 2).unwrap().model;
    assert!(held.distance(&model).unwrap() < free.distance(&model).unwrap());
}
