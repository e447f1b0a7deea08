//! Per-client simulation state.

use crate::fabric::{self, ModelWeights};
use crate::nn::Batch;
use crate::scalar::Scalar;

/// Model with the best personalization score seen so far.
#[derive(Debug, Clone, PartialEq)]
pub struct BestSnapshot<S> {
    pub score: f64,
    pub round: usize,
    pub model: ModelWeights<S>,
    /// SHA-256 of the serialized container.
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientState<S> {
    pub id: usize,
    /// Root of all of this client's training streams.
    pub seed: u64,
    pub train: Batch<S>,
    pub test: Batch<S>,
    pub model: ModelWeights<S>,
    /// Empty means unit weights.
    pub class_weights: Vec<S>,
    pub best: Option<BestSnapshot<S>>,
    pub active: bool,
}

impl<S: Scalar> ClientState<S> {
    pub fn new(
        id: usize,
        seed: u64,
        train: Batch<S>,
        test: Batch<S>,
        model: ModelWeights<S>,
    ) -> Self {
        Self {
            id,
            seed,
            train,
            test,
            model,
            class_weights: Vec::new(),
            best: None,
            active: true,
        }
    }

    /// Training-set size, the client's aggregation weight.
    pub fn n_k(&self) -> usize {
        self.train.len()
    }

    /// Records the current model if `score` matches or beats the stored
    /// best; among tied rounds the latest is kept.
    pub fn offer_best(&mut self, score: f64, round: usize) -> bool {
        if self.best.as_ref().is_some_and(|b| score < b.score) {
            return false;
        }
        let hash = fabric::content_hash(&self.model);
        self.best = Some(BestSnapshot {
            score,
            round,
            model: self.model.clone(),
            hash,
        });
        true
    }
}
