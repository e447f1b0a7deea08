mod common;

use std::time::{Duration, Instant};

use common::*;
use feddist::aggregation::{
    distance_matrix, divergence_threshold, fedavg_round, feddist_round, RoundContext,
};
use feddist::data::{stratified_split, window, window_count, z_normalize, SensorSeries, WindowSet};
use feddist::fabric::{payload_size, LayerWeights, ParamKind};
use feddist::nn::{forward, gradient_check};
use feddist::runner::{self, ROUNDS_CSV};
use feddist::scheduler::{active_clients, run_experiment, ScenarioKind, ScenarioSpec};
use feddist::{Algorithm, Architecture, FedDistConfig, LayerSpec, ModelWeights, TrainingConfig};
use rand::Rng;

fn within(started: Instant, limit: Duration) -> bool {
    started.elapsed() < limit
}

fn random_arch(rng: &mut impl Rng) -> Architecture {
    let window_len = rng.random_range(4..=10);
    let channels = rng.random_range(1..=3);
    let classes = rng.random_range(2..=4);
    let mut layers = Vec::new();
    let mut len = window_len;
    if rng.random_bool(0.5) {
        let kernel = rng.random_range(1..=3.min(len));
        layers.push(LayerSpec::conv1d(rng.random_range(1..=4), kernel));
        len = len - kernel + 1;
        if len >= 2 && rng.random_bool(0.5) {
            layers.push(LayerSpec::maxpool(2));
        }
    }
    for _ in 0..rng.random_range(0..=2) {
        layers.push(LayerSpec::dense(rng.random_range(1..=5)));
    }
    layers.push(LayerSpec::softmax(classes));
    Architecture::new(window_len, channels, layers).unwrap()
}

#[test]
fn criterion_01_fedavg_matches_elementwise_sum() {
    let started = Instant::now();
    let mut rng = rng(101);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let arch = random_arch(&mut rng);
        let server: ModelWeights<f64> = arch.init(trial).unwrap();
        let k = rng.random_range(1..=5);
        let mut clients: Vec<_> = (0..k)
            .map(|id| {
                let n = rng.random_range(1..=12);
                let data =
                    random_batch(&mut rng, n, arch.window_len, arch.channels, arch.classes());
                client(id, 1000 + id as u64, data, &server)
            })
            .collect();
        let cfg = TrainingConfig {
            learning_rate: 0.1,
            local_epochs: 1,
            batch_size: 4,
            ..Default::default()
        };
        let out = fedavg_round(&server, &mut clients, &RoundContext::new(&arch, 1), &cfg).unwrap();

        let n: usize = clients.iter().map(|c| c.n_k()).sum();
        let trained: Vec<Vec<f64>> = clients.iter().map(|c| flat(&c.model)).collect();
        let mut oracle = vec![0.0; trained[0].len()];
        for (c, w) in clients.iter().zip(&trained) {
            for (o, v) in oracle.iter_mut().zip(w) {
                *o += c.n_k() as f64 / n as f64 * v;
            }
        }
        worst = worst.max(max_abs_diff(&flat(&out.model), &oracle));
    }
    let pass = worst <= 1e-12 && within(started, Duration::from_secs(10));
    verdict(
        1,
        "fedavg oracle",
        pass,
        format!(
            "max |Δ| {worst:.3e} over 100 trials in {:.2?}",
            started.elapsed()
        ),
    );
    assert!(pass);
}

/// Distance oracle over the raw weight buffer: the flat index of a weight
/// modulo the output count is its unit.
fn distance_oracle(server: &LayerWeights<f64>, client: &LayerWeights<f64>, unit: usize) -> f64 {
    let outs = server.outputs();
    let mut sq = (server.bias()[unit] - client.bias()[unit]).powi(2);
    for idx in 0..server.weights().len() {
        if idx % outs == unit {
            sq += (server.weights()[idx] - client.weights()[idx]).powi(2);
        }
    }
    sq.sqrt()
}

#[test]
fn criterion_02_distances_match_scalar_loop() {
    let started = Instant::now();
    let mut rng = rng(202);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let conv = trial % 2 == 1;
        let kind = if conv {
            ParamKind::Conv1d
        } else {
            ParamKind::Dense
        };
        let kernel = if conv { rng.random_range(1..=5) } else { 1 };
        let (inputs, outputs) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let make = |rng: &mut rand_chacha::ChaCha8Rng| {
            let w = (0..kernel * inputs * outputs)
                .map(|_| rng.random_range(-2.0..2.0))
                .collect();
            let b = (0..outputs).map(|_| rng.random_range(-2.0..2.0)).collect();
            LayerWeights::new(kind, kernel, inputs, outputs, w, b).unwrap()
        };
        let server = make(&mut rng);
        let clients: Vec<_> = (0..rng.random_range(1..=6))
            .map(|_| make(&mut rng))
            .collect();
        let refs: Vec<&LayerWeights<f64>> = clients.iter().collect();
        let pi = distance_matrix(0, &server, &refs).unwrap();
        for d in 0..outputs {
            for (k, c) in clients.iter().enumerate() {
                worst = worst.max((pi.get(d, k) - distance_oracle(&server, c, d)).abs());
            }
        }
    }
    let s = LayerWeights::dense(1, 1, vec![0.0], vec![0.0]).unwrap();
    let c = LayerWeights::dense(1, 1, vec![3.0], vec![4.0]).unwrap();
    let hand = distance_matrix(0, &s, &[&c]).unwrap().get(0, 0);
    let pass = worst <= 1e-12 && hand == 5.0 && within(started, Duration::from_secs(10));
    verdict(
        2,
        "distance oracle",
        pass,
        format!(
            "max |Δ| {worst:.3e} over 100 trials, 3-4-5 case {hand}, {:.2?}",
            started.elapsed()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_gradient_check() {
    let started = Instant::now();
    let cases = [
        (
            "dense",
            Architecture::new(6, 2, vec![LayerSpec::dense(5), LayerSpec::softmax(3)]),
        ),
        (
            "conv1d",
            Architecture::new(8, 2, vec![LayerSpec::conv1d(3, 3), LayerSpec::softmax(3)]),
        ),
        (
            "pooled",
            Architecture::new(
                12,
                2,
                vec![
                    LayerSpec::conv1d(4, 3),
                    LayerSpec::maxpool(2),
                    LayerSpec::dense(5),
                    LayerSpec::softmax(4),
                ],
            ),
        ),
        (
            "softmax",
            Architecture::new(5, 3, vec![LayerSpec::softmax(4)]),
        ),
    ];
    let mut rng = rng(303);
    let mut errors = Vec::new();
    for (i, (name, arch)) in cases.into_iter().enumerate() {
        let arch = arch.unwrap();
        let model: ModelWeights<f64> = arch.init(i as u64 + 7).unwrap();
        let batch = random_batch(&mut rng, 6, arch.window_len, arch.channels, arch.classes());
        let weights: Vec<f64> = (0..arch.classes()).map(|c| 0.5 + c as f64 * 0.25).collect();
        let cfg = TrainingConfig {
            class_weights: weights,
            ..Default::default()
        };
        errors.push((
            name,
            gradient_check(&model, &arch, &batch, &cfg, 1e-6).unwrap(),
        ));
    }
    let worst = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    let pass = worst < 1e-4 && within(started, Duration::from_secs(30));
    let detail: Vec<String> = errors.iter().map(|(n, e)| format!("{n} {e:.2e}")).collect();
    verdict(3, "gradient fidelity", pass, detail.join(", "));
    assert!(pass);
}

#[test]
fn criterion_04_identical_clients_reduce_to_fedavg() {
    let started = Instant::now();
    let arch = Architecture::new(
        8,
        2,
        vec![
            LayerSpec::dense(6),
            LayerSpec::dense(6),
            LayerSpec::softmax(3),
        ],
    )
    .unwrap();
    let init: ModelWeights<f64> = arch.init(4).unwrap();
    let data = random_batch(&mut rng(404), 24, 8, 2, 3);
    let make = || {
        (0..5)
            .map(|id| client(id, 77, data.clone(), &init))
            .collect::<Vec<_>>()
    };
    let (mut a, mut b) = (make(), make());
    let (mut sa, mut sb) = (init.clone(), init.clone());
    let cfg = TrainingConfig {
        learning_rate: 0.05,
        local_epochs: 2,
        batch_size: 8,
        ..Default::default()
    };
    let fcfg = FedDistConfig::default();
    let (mut identical, mut units, mut bytes_equal) = (true, 0, true);
    for t in 1..=20 {
        let ctx = RoundContext::new(&arch, t);
        let fa = fedavg_round(&sa, &mut a, &ctx, &cfg).unwrap();
        let fd = feddist_round(&sb, &mut b, &ctx, &cfg, &fcfg).unwrap();
        identical &= fa.model == fd.model;
        units += fd.ledger.total_units();
        bytes_equal &= fa.ledger.total_bytes() == fd.ledger.total_bytes();
        sa = fa.model;
        sb = fd.model;
    }
    let pass = identical && units == 0 && bytes_equal && within(started, Duration::from_secs(120));
    verdict(
        4,
        "feddist degeneracy",
        pass,
        format!(
            "bit-identical {identical}, units added {units}, equal bytes {bytes_equal}, {:.2?}",
            started.elapsed()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_controlled_growth() {
    let started = Instant::now();
    let (window_len, channels) = (8, 2);
    let arch = Architecture::new(
        window_len,
        channels,
        vec![
            LayerSpec::dense(16),
            LayerSpec::dense(16),
            LayerSpec::softmax(3),
        ],
    )
    .unwrap();
    let mut r = rng(505);
    let mut server: ModelWeights<f64> = arch.init(5).unwrap();
    let mut clients = vec![
        client(
            0,
            11,
            random_batch(&mut r, 30, window_len, channels, 3),
            &server,
        ),
        client(
            1,
            12,
            random_batch(&mut r, 10, window_len, channels, 3),
            &server,
        ),
    ];
    let rig = DisplacementRig {
        target: 1,
        round: 3,
        layer: 1,
        unit: 0,
        shift: 1.5,
    };
    let cfg = TrainingConfig {
        learning_rate: 0.05,
        local_epochs: 1,
        batch_size: 8,
        ..Default::default()
    };
    let fcfg = FedDistConfig::default();

    let mut growth = Vec::new();
    let mut sub_rounds = Vec::new();
    let mut oracle_count = None;
    let mut appended_matches = false;
    for t in 1..=5 {
        if t == rig.round {
            // Divergent entries computed by hand from the two known uploads.
            let a = server.clone();
            let b = rig.displaced(&server);
            let avg_layer: Vec<Vec<f64>> = (0..16)
                .map(|d| {
                    let va = a.layers()[1].neuron_vector(d).unwrap();
                    let vb = b.layers()[1].neuron_vector(d).unwrap();
                    va.iter()
                        .zip(&vb)
                        .map(|(x, y)| 0.75 * x + 0.25 * y)
                        .collect()
                })
                .collect();
            let mut entries = Vec::new();
            for m in [&a, &b] {
                for (d, s) in avg_layer.iter().enumerate() {
                    let v = m.layers()[1].neuron_vector(d).unwrap();
                    entries.push(
                        s.iter()
                            .zip(&v)
                            .map(|(x, y)| (x - y).powi(2))
                            .sum::<f64>()
                            .sqrt(),
                    );
                }
            }
            let n = entries.len() as f64;
            let mu = entries.iter().sum::<f64>() / n;
            let sigma = (entries.iter().map(|e| (e - mu).powi(2)).sum::<f64>() / n).sqrt();
            let th = divergence_threshold(t, fcfg.beta, fcfg.base_sigma_multiplier, mu, sigma);
            oracle_count = Some(entries.iter().filter(|&&e| e > th).count());
        }
        let ctx = RoundContext::new(&arch, t).with_trainer(&rig);
        let before = server.clone();
        let out = feddist_round(&server, &mut clients, &ctx, &cfg, &fcfg).unwrap();
        growth.push(out.ledger.units_added.clone());
        sub_rounds.push(out.ledger.sub_rounds);
        if t == rig.round {
            let donor = rig.displaced(&before).layers()[1].neuron_vector(0).unwrap();
            appended_matches = out.model.layers()[1]
                .neuron_vector(16)
                .map(|v| v == donor)
                .unwrap_or(false);
        }
        server = out.model;
    }

    let expected: Vec<Vec<usize>> = (1..=5)
        .map(|t| {
            if t == rig.round {
                vec![0, 1, 0]
            } else {
                vec![0, 0, 0]
            }
        })
        .collect();
    let widths = server.shape_signature();
    let probe = random_batch(&mut r, 5, window_len, channels, 3);
    let probs = forward(&server, &arch, &probe).unwrap();
    let mut fwd = 0.0f64;
    for i in 0..probe.len() {
        fwd = fwd.max(max_abs_diff(
            probs.row(i),
            &dense_oracle(&server, probe.example(i), window_len, channels),
        ));
    }
    let subs_ok = sub_rounds
        .iter()
        .enumerate()
        .all(|(i, &s)| s == usize::from(i + 1 == rig.round));
    let pass = growth == expected
        && widths == vec![16, 17, 3]
        && appended_matches
        && oracle_count == Some(1)
        && fwd <= 1e-12
        && subs_ok
        && within(started, Duration::from_secs(60));
    verdict(
        5,
        "controlled growth",
        pass,
        format!(
            "growth {growth:?}, widths {widths:?}, donor copied {appended_matches}, oracle count {oracle_count:?}, \
             forward |Δ| {fwd:.2e}, sub-rounds {sub_rounds:?}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_communication_accounting() {
    let started = Instant::now();
    let (window_len, channels, width) = (16, 1, 16);
    let arch = Architecture::new(
        window_len,
        channels,
        vec![
            LayerSpec::dense(width),
            LayerSpec::dense(width),
            LayerSpec::softmax(width),
        ],
    )
    .unwrap();
    let init: ModelWeights<f64> = arch.init(6).unwrap();
    let mut r = rng(606);
    let data: Vec<_> = (0..3)
        .map(|_| random_batch(&mut r, 20, window_len, channels, width))
        .collect();
    let make = |m: &ModelWeights<f64>| -> Vec<_> {
        data.iter()
            .enumerate()
            .map(|(id, d)| client(id, 50 + id as u64, d.clone(), m))
            .collect()
    };
    let cfg = TrainingConfig {
        learning_rate: 0.05,
        local_epochs: 1,
        batch_size: 8,
        ..Default::default()
    };

    // No growth: a threshold nothing can cross.
    let quiet = FedDistConfig {
        base_sigma_multiplier: 1e12,
        ..Default::default()
    };
    let (mut sa, mut sb) = (init.clone(), init.clone());
    let (mut ca, mut cb) = (make(&init), make(&init));
    let mut zero_growth_equal = true;
    for t in 1..=3 {
        let ctx = RoundContext::new(&arch, t);
        let fa = fedavg_round(&sa, &mut ca, &ctx, &cfg).unwrap();
        let fd = feddist_round(&sb, &mut cb, &ctx, &cfg, &quiet).unwrap();
        zero_growth_equal &= fd.ledger.total_units() == 0
            && fa.ledger.bytes_up == fd.ledger.bytes_up
            && fa.ledger.bytes_down == fd.ledger.bytes_down;
        sa = fa.model;
        sb = fd.model;
    }

    // Forced growth: one unit at every non-output layer each round. Each
    // round's cost is compared with a FedAvg round on the same server.
    let forced = FedDistConfig {
        beta: 0.0,
        base_sigma_multiplier: 1e-9,
        max_new_units: 1,
        layerwise_epochs: Some(1),
    };
    let mut server = init.clone();
    let mut clients = make(&init);
    let mut ratios = Vec::new();
    let mut uploads_ok = true;
    let mut grew_everywhere = true;
    for t in 1..=3 {
        let ctx = RoundContext::new(&arch, t);
        let mut shadow = clients.clone();
        let baseline = fedavg_round(&server, &mut shadow, &ctx, &cfg).unwrap();
        let out = feddist_round(&server, &mut clients, &ctx, &cfg, &forced).unwrap();
        grew_everywhere &= out.ledger.units_added == vec![1, 1, 0];
        ratios.push(out.ledger.total_bytes() as f64 / baseline.ledger.total_bytes() as f64);
        for e in out.ledger.events.iter().filter(|e| e.layer.is_some()) {
            let l = e.layer.unwrap();
            let expect: usize = clients
                .iter()
                .map(|c| payload_size(&c.model.layers()[l + 1..]))
                .sum();
            // Client models are final only after the last sub-round.
            if l == 1 {
                uploads_ok &= e.bytes_up == expect as u64;
            }
        }
        server = out.model;
    }
    let target = 1.0 + (3.0 - 1.0) / 2.0;
    let ratios_ok = ratios.iter().all(|r| (r - target).abs() <= 0.1 * target);
    let pass = zero_growth_equal && grew_everywhere && ratios_ok && uploads_ok;
    verdict(
        6,
        "communication accounting",
        pass,
        format!(
            "zero-growth bytes equal {zero_growth_equal}, forced ratios {:?} vs {target}, growth at every layer \
             {grew_everywhere}, suffix uploads {uploads_ok}, {:.2?}",
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>(),
            started.elapsed()
        ),
    );
    assert!(pass);
}

struct Outcome {
    final_gen: f64,
    best_pers: f64,
}

fn outcome(cfg: &feddist::ExperimentConfig) -> Outcome {
    let data = runner::load_data(cfg).unwrap();
    let exp = run_experiment::<f64>(cfg, &data).unwrap();
    let final_gen = exp
        .reports
        .last()
        .and_then(|r| r.generalization.as_ref())
        .map_or(0.0, |v| v.mean);
    let best_pers = exp
        .reports
        .iter()
        .filter_map(|r| r.personalization.as_ref().map(|v| v.mean))
        .fold(0.0, f64::max);
    Outcome {
        final_gen,
        best_pers,
    }
}

#[test]
fn criterion_07_local_vs_federated_gap() {
    let started = Instant::now();
    let mut gap_ok = true;
    let mut pers_wins = 0;
    let mut lines = Vec::new();
    for seed in 0..3 {
        let fedavg = outcome(&heterogeneous_config(Algorithm::FedAvg, seed, 50));
        let feddist = outcome(&heterogeneous_config(Algorithm::FedDist, seed, 50));
        let local = outcome(&heterogeneous_config(Algorithm::LocalOnly, seed, 50));
        let fl_gen = (fedavg.final_gen + feddist.final_gen) / 2.0;
        gap_ok &= fl_gen >= local.final_gen + 0.10;
        if local.best_pers > fedavg.best_pers && local.best_pers > feddist.best_pers {
            pers_wins += 1;
        }
        lines.push(format!(
            "seed {seed}: gen fedavg {:.3} feddist {:.3} local {:.3}; pers fedavg {:.3} feddist {:.3} local {:.3}",
            fedavg.final_gen, feddist.final_gen, local.final_gen, fedavg.best_pers, feddist.best_pers, local.best_pers
        ));
    }
    let pass = gap_ok && pers_wins >= 2 && within(started, Duration::from_secs(600));
    verdict(
        7,
        "local vs federated gap",
        pass,
        format!(
            "{} | local pers highest on {pers_wins}/3 seeds, {:.1?}",
            lines.join(" | "),
            started.elapsed()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_fedprox_reductions() {
    let started = Instant::now();
    let run = |alg: Algorithm, mu: f64| {
        let mut cfg = heterogeneous_config(alg, 8, 10);
        cfg.training.proximal_coefficient = mu;
        let data = runner::load_data(&cfg).unwrap();
        run_experiment::<f64>(&cfg, &data).unwrap()
    };
    let fedavg = run(Algorithm::FedAvg, 0.0);
    let prox0 = run(Algorithm::FedProx, 0.0);
    let prox10 = run(Algorithm::FedProx, 10.0);

    let relabel = |reports: &[feddist::RoundReport]| {
        reports
            .iter()
            .cloned()
            .map(|mut r| {
                r.algorithm = Algorithm::FedAvg;
                r
            })
            .collect::<Vec<_>>()
    };
    let identical = fedavg.final_model == prox0.final_model
        && relabel(&fedavg.reports) == relabel(&prox0.reports);
    let drift = |e: &feddist::scheduler::Experiment<f64>| -> Vec<f64> {
        e.reports.iter().map(|r| r.drift.unwrap()).collect()
    };
    let (base, damped) = (drift(&fedavg), drift(&prox10));
    let smaller = base.iter().zip(&damped).all(|(b, d)| d < b);
    let pass = identical && smaller;
    verdict(
        8,
        "fedprox reductions",
        pass,
        format!(
            "μ=0 bit-identical {identical}; μ=10 drift below fedavg at all {} rounds: {smaller} (first {:.4} vs {:.4}), {:.2?}",
            base.len(),
            damped[0],
            base[0],
            started.elapsed()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_async_scenarios() {
    let started = Instant::now();
    let mut closed_forms = true;
    for pool in [1, 5, 10, 30] {
        for interval in [1, 3, 14] {
            for start in [1, 2] {
                let inc = ScenarioSpec {
                    kind: ScenarioKind::Incrementing,
                    start_count: start.min(pool),
                    interval_rounds: interval,
                    sample_size: 1,
                };
                let dec = ScenarioSpec {
                    kind: ScenarioKind::Decrementing,
                    ..inc
                };
                let full = ScenarioSpec {
                    kind: ScenarioKind::Full,
                    ..inc
                };
                let swap = ScenarioSpec {
                    kind: ScenarioKind::Interchanging,
                    sample_size: pool.min(8),
                    ..inc
                };
                for t in 1..=500usize {
                    let steps = (t - 1) / interval;
                    let n_inc = pool.min(inc.start_count + steps);
                    let n_dec = if steps >= pool {
                        1
                    } else {
                        (pool - steps).max(1)
                    };
                    let ids = |s: &ScenarioSpec| active_clients(s, t, pool, 9);
                    closed_forms &= ids(&inc) == (0..n_inc).collect::<Vec<_>>();
                    closed_forms &= ids(&dec) == (0..n_dec).collect::<Vec<_>>();
                    closed_forms &= ids(&full).len() == pool;
                    let s = ids(&swap);
                    closed_forms &= s.len() == pool.min(8)
                        && s.windows(2).all(|w| w[0] < w[1])
                        && s.iter().all(|&i| i < pool);
                }
            }
        }
    }

    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 0..3 {
        let scenario = |alg| {
            let mut cfg = heterogeneous_config(alg, seed, 50);
            cfg.scenario = ScenarioSpec {
                kind: ScenarioKind::Decrementing,
                interval_rounds: 5,
                ..Default::default()
            };
            cfg
        };
        let fl = outcome(&scenario(Algorithm::FedDist));
        let local = outcome(&scenario(Algorithm::LocalOnly));
        if fl.final_gen > local.final_gen {
            wins += 1;
        }
        lines.push(format!(
            "seed {seed}: feddist {:.3} vs local {:.3}",
            fl.final_gen, local.final_gen
        ));
    }
    let pass = closed_forms && wins >= 2;
    verdict(
        9,
        "async scenarios",
        pass,
        format!(
            "closed forms hold {closed_forms}; decrementing gen {} ({wins}/3), {:.1?}",
            lines.join(", "),
            started.elapsed()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_manifest_rerun_is_byte_identical() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("first"), tmp.path().join("second"));
    let mut identical = true;
    for alg in [Algorithm::FedDist, Algorithm::FedProx, Algorithm::LocalOnly] {
        let cfg = small_config(alg, 3, 4);
        runner::run(&cfg, &a).unwrap();
        runner::rerun(&a, &b).unwrap();
        let x = std::fs::read(a.join(ROUNDS_CSV)).unwrap();
        let y = std::fs::read(b.join(ROUNDS_CSV)).unwrap();
        identical &= !x.is_empty() && x == y;
    }
    verdict(
        10,
        "determinism",
        identical,
        format!(
            "rounds.csv byte-identical across reruns: {identical}, {:.2?}",
            started.elapsed()
        ),
    );
    assert!(identical);
}

#[test]
fn criterion_11_data_plane_fixtures() {
    let mut r = rng(1111);
    let n = 1000;
    let channels: Vec<Vec<f64>> = (0..6)
        .map(|c| {
            (0..n)
                .map(|_| r.random_range(-3.0..3.0) * (c + 1) as f64 + c as f64)
                .collect()
        })
        .collect();
    let series = SensorSeries::new(channels, 50.0, vec![0; n]).unwrap();
    let windows = window(&series, 128, 64).unwrap();
    let count = windows.len();

    let z = z_normalize(&series);
    let mut worst = 0.0f64;
    for c in &z.series.channels {
        let mean = c.iter().sum::<f64>() / n as f64;
        let std = (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        worst = worst.max(mean.abs()).max((std - 1.0).abs());
    }

    let per_class = [10usize, 20, 5, 15];
    let labels: Vec<usize> = per_class
        .iter()
        .enumerate()
        .flat_map(|(c, &k)| std::iter::repeat_n(c, k))
        .collect();
    let set = WindowSet::new(vec![0.0; labels.len() * 2], labels, 2, 1).unwrap();
    let split = stratified_split(&set, 0.8, 3).unwrap();
    let exact = per_class.iter().enumerate().all(|(c, &k)| {
        let train = split.train.labels.iter().filter(|&&l| l == c).count();
        let test = split.test.labels.iter().filter(|&&l| l == c).count();
        train * 5 == k * 4 && test * 5 == k
    });
    let pass = count == 14 && window_count(n, 128, 64) == 14 && worst <= 1e-9 && exact;
    verdict(
        11,
        "data-plane fixtures",
        pass,
        format!("windows {count}, z-norm max deviation {worst:.2e}, exact 80/20 split {exact}"),
    );
    assert!(pass);
}
