use crate::error::{Error, Result};

use super::WindowSet;

/// Accelerometer x/y/z followed by gyroscope x/y/z.
pub const CHANNELS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct SensorSeries {
    pub channels: Vec<Vec<f64>>,
    pub sample_rate: f64,
    /// Class index of every sample.
    pub labels: Vec<usize>,
}

impl SensorSeries {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: f64, labels: Vec<usize>) -> Result<Self> {
        if !(sample_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sample rate {sample_rate} must be positive"
            )));
        }
        if channels.is_empty() || channels.iter().any(|c| c.len() != labels.len()) {
            return Err(Error::InvalidArgument(
                "channels and labels must share one length".into(),
            ));
        }
        Ok(Self {
            channels,
            sample_rate,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub series: SensorSeries,
    /// Channels with zero variance; these are centered but not scaled.
    pub zero_variance: Vec<bool>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    if n == 0.0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-channel z-normalization with the population standard deviation.
pub fn z_normalize(series: &SensorSeries) -> Normalized {
    let mut zero_variance = Vec::with_capacity(series.channels.len());
    let channels = series
        .channels
        .iter()
        .map(|c| {
            let (mean, std) = mean_std(c.iter().copied());
            zero_variance.push(std == 0.0);
            let scale = if std > 0.0 { std } else { 1.0 };
            c.iter().map(|v| (v - mean) / scale).collect()
        })
        .collect();
    Normalized {
        series: SensorSeries {
            channels,
            sample_rate: series.sample_rate,
            labels: series.labels.clone(),
        },
        zero_variance,
    }
}

/// Channel means and standard deviations fitted on a window set.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    pub fn fit(windows: &WindowSet) -> Self {
        let c = windows.channels;
        let (mean, std) = (0..c)
            .map(|ch| mean_std(windows.inputs.iter().skip(ch).step_by(c).copied()))
            .unzip();
        Self { mean, std }
    }

    pub fn apply(&self, windows: &mut WindowSet) {
        let c = windows.channels;
        for (i, v) in windows.inputs.iter_mut().enumerate() {
            let ch = i % c;
            let scale = if self.std[ch] > 0.0 {
                self.std[ch]
            } else {
                1.0
            };
            *v = (*v - self.mean[ch]) / scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(channels: Vec<Vec<f64>>) -> SensorSeries {
        let n = channels[0].len();
        SensorSeries::new(channels, 50.0, vec![0; n]).unwrap()
    }

    #[test]
    fn one_two_three() {
        let out = z_normalize(&series(vec![vec![1.0, 2.0, 3.0]]));
        let r = 1.5f64.sqrt();
        let got = &out.series.channels[0];
        assert!((got[0] + r).abs() < 1e-12 && got[1].abs() < 1e-12 && (got[2] - r).abs() < 1e-12);
        assert_eq!(out.zero_variance, vec![false]);
    }

    #[test]
    fn idempotent() {
        let once = z_normalize(&series(vec![vec![0.3, -1.0, 2.5, 7.0, 1.1]]));
        let twice = z_normalize(&once.series);
        for (a, b) in once.series.channels[0]
            .iter()
            .zip(&twice.series.channels[0])
        {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_channel_centered_and_flagged() {
        let out = z_normalize(&series(vec![vec![4.0; 5], vec![1.0, 2.0, 1.0, 2.0, 1.0]]));
        assert_eq!(out.series.channels[0], vec![0.0; 5]);
        assert_eq!(out.zero_variance, vec![true, false]);
    }

    #[test]
    fn rejects_ragged() {
        assert!(SensorSeries::new(vec![vec![1.0], vec![1.0, 2.0]], 50.0, vec![0]).is_err());
        assert!(SensorSeries::new(vec![vec![1.0]], 0.0, vec![0]).is_err());
    }
}
