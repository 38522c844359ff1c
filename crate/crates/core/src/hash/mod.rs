//! Sign quantization, Hamming distance and exact Hamming-space retrieval.

mod balltree;
mod persist;
mod scan;

pub use balltree::{BallTreeConfig, BallTreeIndex, NodeView};
pub use scan::{linear_scan, linear_scan_cosine};

use serde::{Deserialize, Serialize};

use crate::domain::{EmbeddingVector, HashCode};
use crate::error::{Error, Result};

/// Bit `k` is set iff `z[k] >= 0`, so exact zeros map to 1.
pub fn quantize(z: &EmbeddingVector) -> HashCode {
    quantize_values(z.as_slice())
}

pub fn quantize_values(z: &[f64]) -> HashCode {
    let bits: Vec<bool> = z.iter().map(|v| *v >= 0.0).collect();
    HashCode::from_bits(&bits)
}

pub fn hamming(a: &HashCode, b: &HashCode) -> Result<u32> {
    if a.bits() != b.bits() {
        return Err(Error::DimMismatch {
            expected: a.bits(),
            found: b.bits(),
        });
    }
    Ok(hamming_words(a.words(), b.words()))
}

#[inline(always)]
pub(crate) fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// How many neighbors to return, optionally only those within `max_distance`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryBudget {
    pub k: usize,
    pub max_distance: Option<u32>,
}

impl QueryBudget {
    pub fn k(k: usize) -> Self {
        Self {
            k,
            max_distance: None,
        }
    }

    pub fn within(k: usize, max_distance: u32) -> Self {
        Self {
            k,
            max_distance: Some(max_distance),
        }
    }
}
