use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

pub const DEFAULT_FOLDS: usize = 4;

/// Stratified assignment of rows to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    /// Fold index per row.
    pub folds: Vec<usize>,
}

/// Shuffle positives and negatives independently, then deal them
/// round-robin into `k` folds. Negatives continue the deal where the
/// positives stopped, so fold sizes also differ by at most one.
pub fn make_stratified_folds(labels: &[u8], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {k}")));
    }
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    if pos.len() + neg.len() != labels.len() {
        return Err(Error::InvalidInput("labels must be 0 or 1".into()));
    }
    if pos.len() < k || neg.len() < k {
        return Err(Error::Precondition(format!(
            "{} positives / {} negatives cannot fill {k} folds",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = rng_from_seed(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut folds = vec![0; labels.len()];
    for (slot, &row) in pos.iter().chain(neg.iter()).enumerate() {
        folds[row] = slot % k;
    }
    Ok(FoldAssignment { k, seed, folds })
}

impl FoldAssignment {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    pub fn valid_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] != fold).collect()
    }

    pub fn positives_per_fold(&self, labels: &[u8]) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for (i, &f) in self.folds.iter().enumerate() {
            counts[f] += labels[i] as usize;
        }
        counts
    }
}
