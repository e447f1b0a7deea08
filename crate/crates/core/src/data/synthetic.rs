use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use super::{prepare_client, ClientData, PipelineParams, SensorSeries, CHANNELS};
use crate::error::{Error, Result};
use crate::seed;

/// Symmetric half-widths of the per-client device distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceRanges {
    /// Channel gains are drawn from `1 ± scale`.
    pub scale: f64,
    /// Rotation about the z axis, applied to both sensor triples.
    pub rotation_deg: f64,
    pub offset: f64,
}

impl Default for DeviceRanges {
    fn default() -> Self {
        Self {
            scale: 0.2,
            rotation_deg: 15.0,
            offset: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub clients: usize,
    pub classes: usize,
    pub dirichlet_alpha: f64,
    pub device: DeviceRanges,
    /// Inclusive range of windows generated per client.
    pub windows_per_client: [usize; 2],
    /// Standard deviation of additive sample noise.
    pub noise: f64,
    /// Per-client distortion of the class waveforms: harmonic phases shift
    /// by up to `style` radians and amplitudes scale by up to `1 ± style/2`.
    pub style: f64,
    /// Length of a constant-activity segment, in window steps.
    pub segment_windows: usize,
    pub pipeline: PipelineParams,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            clients: 10,
            classes: 8,
            dirichlet_alpha: 0.5,
            device: DeviceRanges::default(),
            windows_per_client: [60, 120],
            noise: 1.0,
            style: 1.0,
            segment_windows: 4,
            pipeline: PipelineParams::default(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::config(key, msg));
        if self.clients == 0 {
            return bad("clients", "need at least one client".into());
        }
        if self.classes < 2 {
            return bad("classes", format!("{} < 2", self.classes));
        }
        if !(self.dirichlet_alpha > 0.0 && self.dirichlet_alpha.is_finite()) {
            return bad(
                "dirichlet_alpha",
                format!("{} must be positive and finite", self.dirichlet_alpha),
            );
        }
        let [lo, hi] = self.windows_per_client;
        if lo == 0 || lo > hi {
            return bad(
                "windows_per_client",
                format!("[{lo}, {hi}] is not a non-empty positive range"),
            );
        }
        if !(0.0..1.0).contains(&self.device.scale)
            || self.device.rotation_deg < 0.0
            || self.device.offset < 0.0
        {
            return bad(
                "device",
                "scale must lie in [0, 1), rotation and offset must be ≥ 0".into(),
            );
        }
        if !(self.style >= 0.0 && self.style.is_finite()) {
            return bad(
                "style",
                format!("{} must be a non-negative real", self.style),
            );
        }
        if !(self.noise >= 0.0) {
            return bad("noise", format!("{} < 0", self.noise));
        }
        if self.segment_windows == 0 {
            return bad("segment_windows", "must be positive".into());
        }
        let p = &self.pipeline;
        if p.window_len == 0 || p.step == 0 || !(0.0..=1.0).contains(&p.train_fraction) {
            return bad(
                "pipeline",
                "window length and step must be positive, train fraction in [0, 1]".into(),
            );
        }
        Ok(())
    }
}

/// Raw generated series of one client and the class prior it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticClient {
    pub priors: Vec<f64>,
    pub series: SensorSeries,
}

struct Component {
    harmonic: f64,
    amplitude: f64,
    phase: f64,
}

/// Per-class, per-channel waveform: an offset plus two harmonics whose
/// period divides the window step, so every aligned window sees one phase.
struct ClassTemplate {
    offset: [f64; CHANNELS],
    parts: Vec<[Component; 2]>,
}

fn templates(classes: usize, seed: u64) -> Vec<ClassTemplate> {
    let mut rng = seed::rng(seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    (0..classes)
        .map(|_| {
            let mut offset = [0.0; CHANNELS];
            offset.iter_mut().for_each(|o| *o = std.sample(&mut rng));
            let parts = (0..CHANNELS)
                .map(|_| {
                    [(); 2].map(|_| Component {
                        harmonic: rng.random_range(1..=6) as f64,
                        amplitude: rng.random_range(0.3..1.5),
                        phase: rng.random_range(0.0..2.0 * PI),
                    })
                })
                .collect();
            ClassTemplate { offset, parts }
        })
        .collect()
}

/// A client's own rendition of every class waveform.
fn personalize(base: &[ClassTemplate], style: f64, rng: &mut impl Rng) -> Vec<ClassTemplate> {
    base.iter()
        .map(|t| ClassTemplate {
            offset: t.offset,
            parts: t
                .parts
                .iter()
                .map(|pair| {
                    pair.each_ref().map(|p| Component {
                        harmonic: p.harmonic,
                        amplitude: p.amplitude * (1.0 + 0.5 * style * rng.random_range(-1.0..=1.0)),
                        phase: p.phase + style * rng.random_range(-1.0..=1.0),
                    })
                })
                .collect(),
        })
        .collect()
}

fn dirichlet(alpha: f64, classes: usize, rng: &mut impl Rng) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("validated alpha");
    let draws: Vec<f64> = (0..classes).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        draws.into_iter().map(|d| d / sum).collect()
    } else {
        // every draw underflowed; all the mass lands on one class
        let mut p = vec![0.0; classes];
        p[rng.random_range(0..classes)] = 1.0;
        p
    }
}

fn categorical(p: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (c, &w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return c;
        }
    }
    p.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Raw per-client series before windowing, in client order.
pub fn generate_series(spec: &SyntheticSpec, seed: u64) -> Result<Vec<SyntheticClient>> {
    spec.validate()?;
    let step = spec.pipeline.step;
    let templates = templates(spec.classes, seed::derive(seed, &[seed::STREAM_DATA]));
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::config("noise", e.to_string()))?;
    let d = spec.device;
    let out = (0..spec.clients)
        .map(|k| {
            let mut rng = seed::rng(seed::derive(
                seed,
                &[seed::STREAM_DATA, seed::STREAM_CLIENT, k as u64],
            ));
            let priors = dirichlet(spec.dirichlet_alpha, spec.classes, &mut rng);
            let windows = rng.random_range(spec.windows_per_client[0]..=spec.windows_per_client[1]);
            let n = (windows - 1) * step + spec.pipeline.window_len;
            let gain: Vec<f64> = (0..CHANNELS)
                .map(|_| 1.0 + d.scale * rng.random_range(-1.0..=1.0))
                .collect();
            let shift: Vec<f64> = (0..CHANNELS)
                .map(|_| d.offset * rng.random_range(-1.0..=1.0))
                .collect();
            let theta = (d.rotation_deg * rng.random_range(-1.0..=1.0)).to_radians();
            let (sin, cos) = theta.sin_cos();
            let own = personalize(&templates, spec.style, &mut rng);

            let segment = spec.segment_windows * step;
            let mut labels = Vec::with_capacity(n);
            while labels.len() < n {
                let c = categorical(&priors, &mut rng);
                labels.extend(std::iter::repeat_n(c, segment.min(n - labels.len())));
            }
            let mut channels: Vec<Vec<f64>> =
                (0..CHANNELS).map(|_| Vec::with_capacity(n)).collect();
            let mut raw = [0.0; CHANNELS];
            for (t, &c) in labels.iter().enumerate() {
                let tpl = &own[c];
                for (ch, r) in raw.iter_mut().enumerate() {
                    let wave: f64 = tpl.parts[ch]
                        .iter()
                        .map(|p| {
                            p.amplitude
                                * (2.0 * PI * p.harmonic * t as f64 / step as f64 + p.phase).sin()
                        })
                        .sum();
                    *r = tpl.offset[ch] + wave + noise.sample(&mut rng);
                }
                for triple in [0, 3] {
                    let (x, y) = (raw[triple], raw[triple + 1]);
                    raw[triple] = cos * x - sin * y;
                    raw[triple + 1] = sin * x + cos * y;
                }
                for ch in 0..CHANNELS {
                    channels[ch].push(gain[ch] * raw[ch] + shift[ch]);
                }
            }
            SensorSeries::new(channels, 50.0, labels)
                .map(|series| SyntheticClient { priors, series })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(out)
}

/// Generates every client's series and runs it through [`prepare_client`].
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Vec<ClientData>> {
    generate_series(spec, seed)?
        .iter()
        .enumerate()
        .map(|(k, c)| {
            prepare_client(
                k,
                &c.series,
                &spec.pipeline,
                seed::derive(seed, &[seed::STREAM_SPLIT, k as u64]),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(alpha: f64) -> SyntheticSpec {
        SyntheticSpec {
            clients: 4,
            classes: 3,
            dirichlet_alpha: alpha,
            windows_per_client: [10, 12],
            ..Default::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_synthetic(&small(0.5), 11).unwrap();
        let b = generate_synthetic(&small(0.5), 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_synthetic(&small(0.5), 12).unwrap());
    }

    #[test]
    fn windows_within_range() {
        for c in generate_synthetic(&small(0.5), 3).unwrap() {
            let n = c.train.len() + c.test.len();
            assert!((10..=12).contains(&n), "{n}");
            assert_eq!((c.train.window_len, c.train.channels), (128, 6));
        }
    }

    #[test]
    fn priors_are_distributions() {
        for c in generate_series(&small(0.05), 5).unwrap() {
            assert!((c.priors.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn validation_names_the_key() {
        let spec = SyntheticSpec {
            dirichlet_alpha: 0.0,
            ..Default::default()
        };
        assert!(spec
            .validate()
            .unwrap_err()
            .to_string()
            .contains("dirichlet_alpha"));
        let spec = SyntheticSpec {
            classes: 1,
            ..Default::default()
        };
        assert!(spec.validate().unwrap_err().to_string().contains("classes"));
    }
}
