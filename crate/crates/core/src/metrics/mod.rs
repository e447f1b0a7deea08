//! Classification metrics, the three evaluation views and round reports.

mod report;

pub use report::{
    read_reports_csv, write_reports_csv, write_reports_jsonl, CsvRow, RoundReport, CSV_COLUMNS,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::client::ClientState;
use crate::error::{Error, Result};
use crate::fabric::ModelWeights;
use crate::nn::{evaluate, Architecture, Batch};
use crate::scalar::Scalar;

/// Rows are truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn support(&self, c: usize) -> u64 {
        (0..self.classes).map(|p| self.get(c, p)).sum()
    }

    fn predicted(&self, c: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, c)).sum()
    }

    /// Classes that occur in the truth or the predictions.
    fn present(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.classes).filter(|&c| self.support(c) + self.predicted(c) > 0)
    }

    fn ratio(num: u64, den: u64) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    pub fn precision(&self, c: usize) -> f64 {
        Self::ratio(self.get(c, c), self.predicted(c))
    }

    pub fn recall(&self, c: usize) -> f64 {
        Self::ratio(self.get(c, c), self.support(c))
    }

    /// Harmonic mean of precision and recall; 0 when both are 0.
    pub fn f1(&self, c: usize) -> f64 {
        let (p, r) = (self.precision(c), self.recall(c));
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn accuracy(&self) -> f64 {
        Self::ratio(
            (0..self.classes).map(|c| self.get(c, c)).sum(),
            self.total(),
        )
    }

    fn macro_of(&self, f: impl Fn(usize) -> f64) -> f64 {
        let (sum, n) = self
            .present()
            .fold((0.0, 0usize), |(s, n), c| (s + f(c), n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Unweighted mean of per-class F1 over classes present in the truth
    /// or the predictions.
    pub fn macro_f1(&self) -> f64 {
        self.macro_of(|c| self.f1(c))
    }

    pub fn macro_precision(&self) -> f64 {
        self.macro_of(|c| self.precision(c))
    }

    pub fn macro_recall(&self) -> f64 {
        self.macro_of(|c| self.recall(c))
    }

    /// Per-class F1 weighted by support.
    pub fn weighted_f1(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (0..self.classes)
            .map(|c| self.f1(c) * self.support(c) as f64)
            .sum::<f64>()
            / total as f64
    }
}

pub fn confusion(
    truth: &[usize],
    predictions: &[usize],
    classes: usize,
) -> Result<ConfusionMatrix> {
    if truth.len() != predictions.len() {
        return Err(Error::InvalidArgument(format!(
            "{} labels but {} predictions",
            truth.len(),
            predictions.len()
        )));
    }
    let mut counts = vec![0u64; classes * classes];
    for (&t, &p) in truth.iter().zip(predictions) {
        if t >= classes || p >= classes {
            return Err(Error::IndexOutOfRange {
                index: t.max(p),
                len: classes,
            });
        }
        counts[t * classes + p] += 1;
    }
    Ok(ConfusionMatrix { classes, counts })
}

pub fn macro_f1(cm: &ConfusionMatrix) -> f64 {
    cm.macro_f1()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreBundle {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
}

impl From<&ConfusionMatrix> for ScoreBundle {
    fn from(cm: &ConfusionMatrix) -> Self {
        Self {
            accuracy: cm.accuracy(),
            precision: cm.macro_precision(),
            recall: cm.macro_recall(),
            macro_f1: cm.macro_f1(),
            weighted_f1: cm.weighted_f1(),
        }
    }
}

/// Scores `model` on `data`.
pub fn score<S: Scalar>(
    model: &ModelWeights<S>,
    arch: &Architecture,
    data: &Batch<S>,
) -> Result<ScoreBundle> {
    if data.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot score an empty test set".into(),
        ));
    }
    let predictions = evaluate(model, arch, data)?;
    Ok(ScoreBundle::from(&confusion(
        &data.labels,
        &predictions,
        arch.classes(),
    )?))
}

/// The server model on the concatenation of every client's test set.
pub fn evaluate_global<S: Scalar>(
    model: &ModelWeights<S>,
    arch: &Architecture,
    global_test: &Batch<S>,
) -> Result<ScoreBundle> {
    score(model, arch, global_test)
}

/// Mean, population standard deviation and per-client macro F1.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ViewScores {
    pub mean: f64,
    pub std: f64,
    /// `(client id, macro F1)` in id order.
    pub per_client: Vec<(usize, f64)>,
}

impl ViewScores {
    pub fn from_scores(per_client: Vec<(usize, f64)>) -> Self {
        let (mean, std) = mean_std(per_client.iter().map(|s| s.1));
        Self {
            mean,
            std,
            per_client,
        }
    }
}

/// Mean and population standard deviation; zeros for an empty input.
pub fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Each client's current model on its own test set.
pub fn evaluate_personalization<S: Scalar>(
    clients: &[&ClientState<S>],
    arch: &Architecture,
) -> Result<ViewScores> {
    let scores = clients
        .par_iter()
        .filter(|c| {
            if c.test.is_empty() {
                log::warn!(
                    "client {} has no test windows; left out of personalization",
                    c.id
                );
            }
            !c.test.is_empty()
        })
        .map(|c| score(&c.model, arch, &c.test).map(|s| (c.id, s.macro_f1)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ViewScores::from_scores(scores))
}

/// Each client's best-personalization snapshot on the global test set.
/// Clients without a snapshot are left out.
pub fn evaluate_generalization<S: Scalar>(
    clients: &[&ClientState<S>],
    arch: &Architecture,
    global_test: &Batch<S>,
) -> Result<ViewScores> {
    let scores = clients
        .par_iter()
        .filter_map(|c| match &c.best {
            Some(b) => Some(score(&b.model, arch, global_test).map(|s| (c.id, s.macro_f1))),
            None => {
                log::warn!(
                    "client {} has never been evaluated; left out of generalization",
                    c.id
                );
                None
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ViewScores::from_scores(scores))
}
