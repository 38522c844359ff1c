//! Shared fixtures for the retrieval benchmarks.

use endofinder_core::eval::{clustered_corpus, BenchConfig};
use endofinder_core::hash::{BallTreeConfig, BallTreeIndex};
use endofinder_core::{quantize, EmbeddingVector, HashCode, ReferenceRecord};

pub struct Fixture {
    pub records: Vec<ReferenceRecord>,
    pub index: BallTreeIndex,
    pub queries: Vec<EmbeddingVector>,
    pub codes: Vec<HashCode>,
}

/// A clustered corpus of `corpus_size` records with `dim`-bit codes, indexed.
pub fn fixture(corpus_size: usize, dim: usize, n_queries: usize) -> Fixture {
    let cfg = BenchConfig {
        corpus_size,
        dim,
        code_bits: dim,
        n_queries,
        ..BenchConfig::default()
    };
    let (records, queries) = clustered_corpus(&cfg).expect("valid bench config");
    let index = BallTreeIndex::build(records.clone(), &BallTreeConfig::default()).expect("nonempty corpus");
    let codes = queries.iter().map(quantize).collect();
    Fixture {
        records,
        index,
        queries,
        codes,
    }
}
