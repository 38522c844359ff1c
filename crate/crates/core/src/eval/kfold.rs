use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fold index per item; folds partition the items with sizes differing by at most one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_items: usize,
    pub n_folds: usize,
    pub seed: u64,
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n_items).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n_items).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Seeded shuffle, then round-robin assignment.
pub fn kfold(n_items: usize, n_folds: usize, seed: u64) -> Result<FoldPlan> {
    if n_folds == 0 || n_folds > n_items {
        return Err(Error::TooFewItems {
            items: n_items,
            folds: n_folds,
        });
    }
    let mut order: Vec<usize> = (0..n_items).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; n_items];
    for (pos, &item) in order.iter().enumerate() {
        assignment[item] = pos % n_folds;
    }
    Ok(FoldPlan {
        n_items,
        n_folds,
        seed,
        assignment,
    })
}
