use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One query–reference comparison; higher `score` means more similar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub query_id: String,
    pub ref_id: String,
    pub score: f64,
    pub is_match: bool,
}

/// Global ranking: descending score, then ascending `ref_id`, then `query_id`.
fn ranked(pairs: &[ScoredPair]) -> Vec<&ScoredPair> {
    let mut v: Vec<&ScoredPair> = pairs.iter().collect();
    v.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.ref_id.cmp(&b.ref_id))
            .then_with(|| a.query_id.cmp(&b.query_id))
    });
    v
}

fn positives(pairs: &[ScoredPair]) -> Result<usize> {
    match pairs.iter().filter(|p| p.is_match).count() {
        0 => Err(Error::NoPositives),
        n => Ok(n),
    }
}

/// Micro-averaged precision over all pairs pooled into one ranking.
pub fn micro_ap(pairs: &[ScoredPair]) -> Result<f64> {
    let total = positives(pairs)?;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, p) in ranked(pairs).into_iter().enumerate() {
        if p.is_match {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / total as f64)
}

/// Recall of the longest prefix of the global ranking with precision ≥ 90%.
pub fn recall_at_p90(pairs: &[ScoredPair]) -> Result<f64> {
    let total = positives(pairs)?;
    let mut hits = 0usize;
    let mut best = 0usize;
    for (i, p) in ranked(pairs).into_iter().enumerate() {
        hits += usize::from(p.is_match);
        // precision = hits / (i+1) >= 9/10, in exact integer arithmetic
        if 10 * hits >= 9 * (i + 1) {
            best = hits;
        }
    }
    Ok(best as f64 / total as f64)
}

/// Recall at an arbitrary precision floor (floating-point comparison).
pub fn recall_at_precision(pairs: &[ScoredPair], precision: f64) -> Result<f64> {
    let total = positives(pairs)?;
    let mut hits = 0usize;
    let mut best = 0usize;
    for (i, p) in ranked(pairs).into_iter().enumerate() {
        hits += usize::from(p.is_match);
        if hits as f64 / (i + 1) as f64 >= precision {
            best = hits;
        }
    }
    Ok(best as f64 / total as f64)
}

/// Candidates for one query, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRanking {
    pub query_id: String,
    pub true_match: String,
    pub ranked: Vec<String>,
}

/// Fraction of queries whose top candidate is the true match.
pub fn acc_at_1(rankings: &[QueryRanking]) -> f64 {
    if rankings.is_empty() {
        return 0.0;
    }
    let hits = rankings
        .iter()
        .filter(|r| r.ranked.first() == Some(&r.true_match))
        .count();
    hits as f64 / rankings.len() as f64
}

/// Binary confusion-matrix metrics. Ratios with a zero denominator are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub acc: Option<f64>,
    pub sen: Option<f64>,
    pub spe: Option<f64>,
    pub f1: Option<f64>,
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn classification_metrics(
    predictions: &[u32],
    truths: &[u32],
    positive_class: u32,
) -> Result<ClassificationMetrics> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truths.len(),
        });
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (p, t) in predictions.iter().zip(truths) {
        match (*p == positive_class, *t == positive_class) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(ClassificationMetrics {
        acc: ratio(tp + tn, truths.len()),
        sen: ratio(tp, tp + fn_),
        spe: ratio(tn, tn + fp),
        f1: ratio(2 * tp, 2 * tp + fp + fn_),
        tp,
        tn,
        fp,
        fn_,
    })
}

/// Ordering helper shared by harnesses that rank candidates per query.
pub(crate) fn by_score_then_id(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}
