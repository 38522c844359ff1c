//! K-nearest-neighbor majority vote over the reference database, plus the
//! evidence report that makes each prediction inspectable.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::domain::{EmbeddingVector, HashCode, Neighbor, ReferenceRecord, RetrievalResult};
use crate::error::{Error, Result};
use crate::hash::{linear_scan, linear_scan_cosine, quantize, BallTreeIndex, QueryBudget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Hamming distance between sign-quantized codes.
    Hamming,
    /// `1 − cos` between raw embeddings.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnnConfig {
    pub k: usize,
    pub metric: Metric,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            k: 5,
            metric: Metric::Hamming,
        }
    }
}

/// Where neighbors come from.
#[derive(Debug, Clone, Copy)]
pub enum References<'a> {
    Index(&'a BallTreeIndex),
    Records(&'a [ReferenceRecord]),
}

impl<'a> References<'a> {
    pub fn records(&self) -> &'a [ReferenceRecord] {
        match self {
            References::Index(idx) => idx.records(),
            References::Records(r) => r,
        }
    }

    fn check_k(&self, k: usize) -> Result<()> {
        let n = self.records().len();
        if n == 0 {
            return Err(Error::EmptyDatabase);
        }
        if k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if k > n {
            return Err(Error::KTooLarge { k, n });
        }
        Ok(())
    }
}

impl<'a> From<&'a BallTreeIndex> for References<'a> {
    fn from(idx: &'a BallTreeIndex) -> Self {
        References::Index(idx)
    }
}

impl<'a> From<&'a [ReferenceRecord]> for References<'a> {
    fn from(r: &'a [ReferenceRecord]) -> Self {
        References::Records(r)
    }
}

impl<'a> From<&'a Vec<ReferenceRecord>> for References<'a> {
    fn from(r: &'a Vec<ReferenceRecord>) -> Self {
        References::Records(r)
    }
}

/// Majority vote over ranked neighbors. Among tied classes the one with the
/// closest member wins; equal closest distances go to the lower class index.
pub fn vote(neighbors: &[Neighbor]) -> Option<(u32, BTreeMap<u32, usize>)> {
    let mut hist = BTreeMap::new();
    let mut nearest: BTreeMap<u32, f64> = BTreeMap::new();
    for n in neighbors {
        *hist.entry(n.label).or_insert(0usize) += 1;
        let d = nearest.entry(n.label).or_insert(n.distance);
        *d = d.min(n.distance);
    }
    let top = *hist.values().max()?;
    let winner = nearest
        .iter()
        .filter(|(c, _)| hist[*c] == top)
        .min_by(|a, b| a.1.total_cmp(b.1).then_with(|| a.0.cmp(b.0)))
        .map(|(c, _)| *c)
        .expect("top class has a member");
    Some((winner, hist))
}

fn finish(neighbors: Vec<Neighbor>) -> Result<RetrievalResult> {
    let (predicted_label, vote_histogram) = vote(&neighbors).ok_or(Error::EmptyDatabase)?;
    Ok(RetrievalResult {
        neighbors,
        predicted_label,
        vote_histogram,
    })
}

pub fn classify<'a>(
    refs: impl Into<References<'a>>,
    query: &EmbeddingVector,
    cfg: &KnnConfig,
) -> Result<RetrievalResult> {
    let refs = refs.into();
    refs.check_k(cfg.k)?;
    match cfg.metric {
        Metric::Hamming => classify_code(refs, &quantize(query), cfg.k),
        Metric::Cosine => finish(linear_scan_cosine(refs.records(), query, cfg.k)?),
    }
}

/// Hamming-metric classification of an already-quantized query.
pub fn classify_code<'a>(
    refs: impl Into<References<'a>>,
    code: &HashCode,
    k: usize,
) -> Result<RetrievalResult> {
    let refs = refs.into();
    refs.check_k(k)?;
    let neighbors = match refs {
        References::Index(idx) => idx.query(code, QueryBudget::k(k))?,
        References::Records(r) => linear_scan(r, code, k)?,
    };
    finish(neighbors)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRow {
    pub id: String,
    pub label: u32,
    pub distance: f64,
    pub rank: usize,
}

/// The explainability payload: which references decided the label, and how firmly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceReport {
    pub query_id: Option<String>,
    pub predicted_label: u32,
    /// Votes for the winning class minus votes for the runner-up.
    pub margin: usize,
    pub vote_histogram: BTreeMap<u32, usize>,
    pub neighbors: Vec<EvidenceRow>,
}

pub fn explain(
    result: &RetrievalResult,
    records: &[ReferenceRecord],
    query_id: Option<&str>,
) -> Result<EvidenceReport> {
    let known: HashSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    if let Some(n) = result.neighbors.iter().find(|n| !known.contains(n.id.as_str())) {
        return Err(Error::UnknownId(n.id.clone()));
    }
    let top = result.vote_histogram.get(&result.predicted_label).copied().unwrap_or(0);
    let runner_up = result
        .vote_histogram
        .iter()
        .filter(|(c, _)| **c != result.predicted_label)
        .map(|(_, v)| *v)
        .max()
        .unwrap_or(0);
    Ok(EvidenceReport {
        query_id: query_id.map(str::to_string),
        predicted_label: result.predicted_label,
        margin: top.saturating_sub(runner_up),
        vote_histogram: result.vote_histogram.clone(),
        neighbors: result
            .neighbors
            .iter()
            .enumerate()
            .map(|(i, n)| EvidenceRow {
                id: n.id.clone(),
                label: n.label,
                distance: n.distance,
                rank: i + 1,
            })
            .collect(),
    })
}
