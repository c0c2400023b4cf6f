use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;

/// Segment → fold map; every segment lives in exactly one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub folds: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, segment_id: &str) -> Option<usize> {
        self.folds.get(segment_id).copied()
    }

    pub fn segments_in(&self, fold: usize) -> Vec<&str> {
        self.folds
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(s, _)| s.as_str())
            .collect()
    }
}

/// Seeded shuffle of the segment ids followed by round-robin assignment.
pub fn grouped_kfold(segment_ids: &[String], k: usize, seed: u64) -> Result<FoldAssignment, EvalError> {
    let mut ids: Vec<&String> = segment_ids.iter().collect();
    ids.sort();
    ids.dedup();
    if k < 2 || ids.len() < k {
        return Err(EvalError::TooFewSegments {
            segments: ids.len(),
            k,
        });
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let folds = ids
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i % k))
        .collect();
    Ok(FoldAssignment { k, seed, folds })
}
