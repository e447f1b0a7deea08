use super::SensorSeries;
use crate::error::Result;
use crate::nn::Batch;

pub const DEFAULT_WINDOW: usize = 128;
pub const DEFAULT_STEP: usize = 64;

/// Windows of `window_len × channels` samples, time-major, one label each.
pub type WindowSet = Batch<f64>;

/// `floor((n − length) / step) + 1`, or 0 when the series is too short.
pub fn window_count(n: usize, length: usize, step: usize) -> usize {
    if n < length || step == 0 {
        0
    } else {
        (n - length) / step + 1
    }
}

/// Cuts windows at offsets `0, step, 2·step, …`; the trailing remainder is
/// dropped. Each window takes the majority label of its samples, ties going
/// to the lowest class index.
pub fn window(series: &SensorSeries, length: usize, step: usize) -> Result<WindowSet> {
    if length == 0 || step == 0 {
        return Err(crate::Error::InvalidArgument(
            "window length and step must be positive".into(),
        ));
    }
    let channels = series.channel_count();
    let count = window_count(series.len(), length, step);
    if count == 0 {
        log::warn!(
            "series of {} samples is shorter than one {length}-sample window",
            series.len()
        );
        return Ok(Batch::empty(length, channels));
    }
    let classes = series.labels.iter().max().map_or(0, |m| m + 1);
    let mut inputs = Vec::with_capacity(count * length * channels);
    let mut labels = Vec::with_capacity(count);
    let mut votes = vec![0usize; classes];
    for w in 0..count {
        let start = w * step;
        for t in start..start + length {
            for ch in &series.channels {
                inputs.push(ch[t]);
            }
        }
        votes.iter_mut().for_each(|v| *v = 0);
        for &l in &series.labels[start..start + length] {
            votes[l] += 1;
        }
        let mut best = 0;
        for (c, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = c;
            }
        }
        labels.push(best);
    }
    Batch::new(inputs, labels, length, channels)
}
