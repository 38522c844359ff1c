//! Exhaustive retrieval: the correctness oracle for the ball tree and the
//! raw-embedding (cosine) retrieval path.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::hamming;
use crate::domain::{dot, EmbeddingVector, HashCode, Neighbor, ReferenceRecord};
use crate::error::{Error, Result};

/// The `k` nearest records by Hamming distance, ties by ascending id.
pub fn linear_scan(records: &[ReferenceRecord], code: &HashCode, k: usize) -> Result<Vec<Neighbor>> {
    let mut all = records
        .iter()
        .map(|r| Ok((hamming(code, &r.code)?, r)))
        .collect::<Result<Vec<_>>>()?;
    all.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
    Ok(all
        .into_iter()
        .take(k)
        .map(|(d, r)| Neighbor {
            id: r.id.clone(),
            label: r.label,
            distance: f64::from(d),
        })
        .collect())
}

struct Candidate<'a> {
    distance: f64,
    record: &'a ReferenceRecord,
}

impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then_with(|| self.record.id.cmp(&other.record.id))
    }
}

impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate<'_> {}

/// The `k` most similar records by cosine over raw embeddings; the reported
/// distance is `1 − cos`. Every record must carry its raw embedding.
pub fn linear_scan_cosine(
    records: &[ReferenceRecord],
    query: &EmbeddingVector,
    k: usize,
) -> Result<Vec<Neighbor>> {
    let mut heap: BinaryHeap<Candidate<'_>> = BinaryHeap::with_capacity(k + 1);
    if k == 0 {
        return Ok(Vec::new());
    }
    for r in records {
        let raw = r.raw.as_ref().ok_or_else(|| {
            Error::InvalidConfig(format!("record {:?} has no raw embedding", r.id))
        })?;
        if raw.dim() != query.dim() {
            return Err(Error::DimMismatch {
                expected: raw.dim(),
                found: query.dim(),
            });
        }
        let c = Candidate {
            distance: 1.0 - dot(raw.as_slice(), query.as_slice()).clamp(-1.0, 1.0),
            record: r,
        };
        if heap.len() < k {
            heap.push(c);
        } else if c < *heap.peek().expect("nonempty") {
            heap.pop();
            heap.push(c);
        }
    }
    Ok(heap
        .into_sorted_vec()
        .into_iter()
        .map(|c| Neighbor {
            id: c.record.id.clone(),
            label: c.record.label,
            distance: c.distance,
        })
        .collect())
}
