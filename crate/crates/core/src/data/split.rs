use rand::seq::SliceRandom;

use super::WindowSet;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: WindowSet,
    pub test: WindowSet,
    pub warnings: Vec<String>,
}

/// Number of a class's `n` windows that go to training: `round(n·f)`,
/// clamped so a class with at least two windows keeps one for testing and
/// one for training.
pub(crate) fn train_count(n: usize, fraction: f64) -> usize {
    if n < 2 {
        return n;
    }
    ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
}

/// Per-class shuffled split. Output windows keep their original relative
/// order within each split.
pub fn stratified_split(windows: &WindowSet, train_fraction: f64, seed: u64) -> Result<Split> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::InvalidArgument(format!(
            "train fraction {train_fraction} outside [0, 1]"
        )));
    }
    let classes = windows.labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); classes];
    for (i, &l) in windows.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut warnings = Vec::new();
    for (c, mut idx) in by_class.into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() == 1 {
            warnings.push(format!(
                "class {c} has a single window; kept in the training split"
            ));
        }
        let k = train_count(idx.len(), train_fraction);
        idx.shuffle(&mut seed::rng(seed::derive(
            seed,
            &[seed::STREAM_SPLIT, c as u64],
        )));
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        train: windows.select(&train),
        test: windows.select(&test),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Batch;

    fn windows(labels: Vec<usize>) -> WindowSet {
        let inputs = (0..labels.len()).map(|i| i as f64).collect();
        Batch::new(inputs, labels, 1, 1).unwrap()
    }

    fn counts(b: &WindowSet, classes: usize) -> Vec<usize> {
        (0..classes)
            .map(|c| b.labels.iter().filter(|&&l| l == c).count())
            .collect()
    }

    #[test]
    fn exact_eighty_twenty() {
        let w = windows((0..20).map(|i| i % 2).collect());
        let s = stratified_split(&w, 0.8, 3).unwrap();
        assert_eq!(counts(&s.train, 2), vec![8, 8]);
        assert_eq!(counts(&s.test, 2), vec![2, 2]);
    }

    #[test]
    fn seven_and_thirteen() {
        let w = windows([vec![0; 7], vec![1; 13]].concat());
        let s = stratified_split(&w, 0.8, 1).unwrap();
        // each class within one window of its exact share, test never empty
        for (c, n) in [(0, 7usize), (1, 13)] {
            let got = counts(&s.train, 2)[c];
            let oracle: Vec<usize> = (1..n)
                .filter(|k| (*k as f64 - 0.8 * n as f64).abs() < 1.0)
                .collect();
            assert!(oracle.contains(&got), "class {c}: {got} not in {oracle:?}");
        }
        assert_eq!(counts(&s.train, 2), vec![6, 10]);
    }

    #[test]
    fn deterministic_complete_disjoint() {
        let w = windows((0..37).map(|i| i % 3).collect());
        let a = stratified_split(&w, 0.8, 9).unwrap();
        assert_eq!(a, stratified_split(&w, 0.8, 9).unwrap());
        let mut all: Vec<f64> = a
            .train
            .inputs
            .iter()
            .chain(&a.test.inputs)
            .copied()
            .collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..37).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn singleton_goes_to_train() {
        let w = windows(vec![0, 0, 0, 1]);
        let s = stratified_split(&w, 0.8, 0).unwrap();
        assert_eq!(counts(&s.train, 2)[1], 1);
        assert_eq!(s.warnings.len(), 1);
    }
}
