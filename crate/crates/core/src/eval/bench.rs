use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{l2_normalize, EmbeddingVector, ReferenceRecord};
use crate::error::{Error, Result};
use crate::hash::{linear_scan_cosine, quantize, BallTreeConfig, BallTreeIndex, QueryBudget};
use crate::synth::mix_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub corpus_size: usize,
    pub dim: usize,
    pub code_bits: usize,
    pub n_queries: usize,
    pub k: usize,
    /// Records per synthetic cluster.
    pub cluster_size: usize,
    /// Per-coordinate noise around a cluster center (centers are standard normal).
    pub noise: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            corpus_size: 100_000,
            dim: 256,
            code_bits: 256,
            n_queries: 1000,
            k: 5,
            cluster_size: 100,
            noise: 0.5,
            seed: 7,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.corpus_size == 0 || self.dim == 0 || self.n_queries == 0 || self.k == 0 || self.cluster_size == 0 {
            return Err(Error::InvalidConfig("benchmark sizes must be at least 1".into()));
        }
        if self.code_bits != self.dim {
            return Err(Error::InvalidConfig(format!(
                "sign quantization yields one bit per dimension: code_bits {} != dim {}",
                self.code_bits, self.dim
            )));
        }
        if self.k > self.corpus_size {
            return Err(Error::KTooLarge {
                k: self.k,
                n: self.corpus_size,
            });
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::InvalidConfig("noise must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub clusters: usize,
    pub build_s: f64,
    /// Median seconds per hashed ball-tree query (quantization included).
    pub hash_query_s: f64,
    /// Median seconds per raw cosine linear scan.
    pub raw_scan_s: f64,
    pub fps: f64,
    pub speedup: f64,
    pub machine: String,
}

pub(crate) fn median(times: &mut [f64]) -> f64 {
    if times.is_empty() {
        return 0.0;
    }
    times.sort_by(f64::total_cmp);
    let n = times.len();
    if n % 2 == 1 {
        times[n / 2]
    } else {
        0.5 * (times[n / 2 - 1] + times[n / 2])
    }
}

fn machine_note() -> String {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{}-{}, {} hardware threads available; all queries timed on a single thread",
        std::env::consts::ARCH,
        std::env::consts::OS,
        cores
    )
}

fn noisy(center: &[f64], noise: f64, rng: &mut ChaCha8Rng) -> Result<EmbeddingVector> {
    let v: Vec<f64> = center
        .iter()
        .map(|c| c + noise * Distribution::<f64>::sample(&StandardNormal, rng))
        .collect::<Vec<_>>();
    l2_normalize(&v)
}

/// Clustered unit vectors: a corpus plus held-out queries drawn from the same clusters.
pub fn clustered_corpus(cfg: &BenchConfig) -> Result<(Vec<ReferenceRecord>, Vec<EmbeddingVector>)> {
    cfg.validate()?;
    let clusters = cfg.corpus_size.div_ceil(cfg.cluster_size);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0xBE7C));
    let centers: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..cfg.dim).map(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect())
        .collect();
    let width = cfg.corpus_size.to_string().len();
    let records = (0..cfg.corpus_size)
        .map(|i| {
            let c = i % clusters;
            let z = noisy(&centers[c], cfg.noise, &mut rng)?;
            Ok(ReferenceRecord::from_embedding(format!("r{i:0width$}"), 1 + (c % 2) as u32, z))
        })
        .collect::<Result<Vec<_>>>()?;
    let queries = (0..cfg.n_queries)
        .map(|_| {
            let c = rng.random_range(0..clusters);
            noisy(&centers[c], cfg.noise, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((records, queries))
}

/// Median per-query latency of hashed ball-tree search against a raw cosine scan.
pub fn bench_retrieval(cfg: &BenchConfig) -> Result<BenchReport> {
    let (records, queries) = clustered_corpus(cfg)?;
    let clusters = cfg.corpus_size.div_ceil(cfg.cluster_size);

    let mut raw_times = Vec::with_capacity(queries.len());
    for q in &queries {
        let t = Instant::now();
        std::hint::black_box(linear_scan_cosine(&records, q, cfg.k)?);
        raw_times.push(t.elapsed().as_secs_f64());
    }

    let t = Instant::now();
    let index = BallTreeIndex::build(records, &BallTreeConfig::default())?;
    let build_s = t.elapsed().as_secs_f64();

    let mut hash_times = Vec::with_capacity(queries.len());
    for q in &queries {
        let t = Instant::now();
        std::hint::black_box(index.query(&quantize(q), QueryBudget::k(cfg.k))?);
        hash_times.push(t.elapsed().as_secs_f64());
    }

    let hash_query_s = median(&mut hash_times);
    let raw_scan_s = median(&mut raw_times);
    let per_second = |s: f64| if s > 0.0 { 1.0 / s } else { f64::INFINITY };
    Ok(BenchReport {
        config: cfg.clone(),
        clusters,
        build_s,
        hash_query_s,
        raw_scan_s,
        fps: per_second(hash_query_s),
        speedup: raw_scan_s * per_second(hash_query_s),
        machine: machine_note(),
    })
}
