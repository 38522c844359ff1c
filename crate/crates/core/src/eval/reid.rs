use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::bench::median;
use super::metrics::{acc_at_1, by_score_then_id, micro_ap, recall_at_p90, QueryRanking, ScoredPair};
use crate::domain::endf::EmbeddingRecord;
use crate::domain::{dot, ReferenceRecord};
use crate::error::{Error, Result};
use crate::hash::{hamming, linear_scan_cosine, quantize, BallTreeConfig, BallTreeIndex, QueryBudget};
use crate::synth::SynthSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReidMethod {
    /// Cosine similarity of the float embeddings.
    Raw,
    /// Negated Hamming distance of the sign codes.
    Hash,
}

impl ReidMethod {
    pub fn name(self) -> &'static str {
        match self {
            ReidMethod::Raw => "Raw",
            ReidMethod::Hash => "Hash",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReidRow {
    pub method: ReidMethod,
    pub uap: f64,
    pub acc_at_1: f64,
    pub recall_at_p90: f64,
    /// Median seconds per top-1 query against the evaluated corpus.
    pub time_s: f64,
    pub fps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReidReport {
    pub n_items: usize,
    pub n_queries: usize,
    pub n_pairs: usize,
    pub dim: usize,
    pub rows: Vec<ReidRow>,
}

impl ReidReport {
    pub fn row(&self, method: ReidMethod) -> Option<&ReidRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

fn twins(a: &str, b: &str) -> bool {
    SynthSample::instance_of(a) == SynthSample::instance_of(b)
}

/// Every item queries every other item. Two ids match when they share an
/// instance prefix. Queries without any twin still contribute pairs but are
/// left out of the per-query rankings.
pub fn reid_pairs(items: &[EmbeddingRecord], method: ReidMethod) -> Result<(Vec<ScoredPair>, Vec<QueryRanking>)> {
    let dim = items.first().map_or(0, |r| r.embedding.dim());
    if let Some(r) = items.iter().find(|r| r.embedding.dim() != dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            found: r.embedding.dim(),
        });
    }
    let codes: Vec<_> = items.iter().map(|r| quantize(&r.embedding)).collect();
    let mut pairs = Vec::with_capacity(items.len() * items.len().saturating_sub(1));
    let mut rankings = Vec::new();
    for (qi, q) in items.iter().enumerate() {
        let mut scored = Vec::with_capacity(items.len());
        for (ri, r) in items.iter().enumerate() {
            if ri == qi || r.id == q.id {
                continue;
            }
            let score = match method {
                ReidMethod::Raw => dot(q.embedding.as_slice(), r.embedding.as_slice()),
                ReidMethod::Hash => -f64::from(hamming(&codes[qi], &codes[ri])?),
            };
            scored.push((r.id.as_str(), score));
            pairs.push(ScoredPair {
                query_id: q.id.clone(),
                ref_id: r.id.clone(),
                score,
                is_match: twins(&q.id, &r.id),
            });
        }
        scored.sort_by(|a, b| by_score_then_id(*a, *b));
        let ranked: Vec<String> = scored.iter().map(|(id, _)| id.to_string()).collect();
        // with several twins, the best-ranked one is the match to find
        if let Some(t) = ranked.iter().find(|id| twins(&q.id, id)) {
            rankings.push(QueryRanking {
                query_id: q.id.clone(),
                true_match: t.clone(),
                ranked,
            });
        }
    }
    Ok((pairs, rankings))
}

fn time_queries(items: &[EmbeddingRecord], method: ReidMethod) -> Result<f64> {
    let refs: Vec<ReferenceRecord> = items
        .iter()
        .map(|r| ReferenceRecord::from_embedding(r.id.clone(), 1, r.embedding.clone()))
        .collect();
    let k = 2.min(refs.len());
    let mut times = Vec::with_capacity(items.len());
    match method {
        ReidMethod::Raw => {
            for q in items {
                let t = Instant::now();
                std::hint::black_box(linear_scan_cosine(&refs, &q.embedding, k)?);
                times.push(t.elapsed().as_secs_f64());
            }
        }
        ReidMethod::Hash => {
            let codes: Vec<_> = refs.iter().map(|r| r.code.clone()).collect();
            let index = BallTreeIndex::build(refs, &BallTreeConfig::default())?;
            for c in &codes {
                let t = Instant::now();
                std::hint::black_box(index.query(c, QueryBudget::k(k))?);
                times.push(t.elapsed().as_secs_f64());
            }
        }
    }
    Ok(median(&mut times))
}

/// Table-1-style re-identification report for raw and hashed retrieval.
pub fn evaluate_reid(items: &[EmbeddingRecord]) -> Result<ReidReport> {
    if items.len() < 2 {
        return Err(Error::NoPositives);
    }
    let mut rows = Vec::new();
    let mut n_queries = 0;
    let mut n_pairs = 0;
    for method in [ReidMethod::Raw, ReidMethod::Hash] {
        let (pairs, rankings) = reid_pairs(items, method)?;
        let time_s = time_queries(items, method)?;
        n_queries = rankings.len();
        n_pairs = pairs.len();
        rows.push(ReidRow {
            method,
            uap: micro_ap(&pairs)?,
            acc_at_1: acc_at_1(&rankings),
            recall_at_p90: recall_at_p90(&pairs)?,
            time_s,
            fps: if time_s > 0.0 { 1.0 / time_s } else { f64::INFINITY },
        });
    }
    Ok(ReidReport {
        n_items: items.len(),
        n_queries,
        n_pairs,
        dim: items[0].embedding.dim(),
        rows,
    })
}
