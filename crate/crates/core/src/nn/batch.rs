use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major matrix, used for class-probability outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Windows of `window_len × channels` samples (time-major within each
/// example) with one class label per window.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<S> {
    pub inputs: Vec<S>,
    pub labels: Vec<usize>,
    pub window_len: usize,
    pub channels: usize,
}

/// A client's local data is just a large batch.
pub type Dataset<S> = Batch<S>;

impl<S: Scalar> Batch<S> {
    pub fn new(
        inputs: Vec<S>,
        labels: Vec<usize>,
        window_len: usize,
        channels: usize,
    ) -> Result<Self> {
        if inputs.len() != labels.len() * window_len * channels {
            return Err(Error::InvalidArgument(format!(
                "{} input values for {} windows of {window_len}×{channels}",
                inputs.len(),
                labels.len()
            )));
        }
        Ok(Self {
            inputs,
            labels,
            window_len,
            channels,
        })
    }

    pub fn empty(window_len: usize, channels: usize) -> Self {
        Self {
            inputs: Vec::new(),
            labels: Vec::new(),
            window_len,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn example_size(&self) -> usize {
        self.window_len * self.channels
    }

    pub fn example(&self, i: usize) -> &[S] {
        let n = self.example_size();
        &self.inputs[i * n..(i + 1) * n]
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let mut inputs = Vec::with_capacity(indices.len() * self.example_size());
        for &i in indices {
            inputs.extend_from_slice(self.example(i));
        }
        Self {
            inputs,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            window_len: self.window_len,
            channels: self.channels,
        }
    }

    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Self>) -> Result<Self> {
        let mut out: Option<Self> = None;
        for p in parts {
            match &mut out {
                None => out = Some(p.clone()),
                Some(acc) => {
                    if acc.window_len != p.window_len || acc.channels != p.channels {
                        return Err(Error::InvalidArgument(
                            "batches differ in window shape".into(),
                        ));
                    }
                    acc.inputs.extend_from_slice(&p.inputs);
                    acc.labels.extend_from_slice(&p.labels);
                }
            }
        }
        out.ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))
    }

    pub fn cast<T: Scalar>(&self) -> Batch<T> {
        Batch {
            inputs: self.inputs.iter().map(|v| T::of(v.as_f64())).collect(),
            labels: self.labels.clone(),
            window_len: self.window_len,
            channels: self.channels,
        }
    }
}
