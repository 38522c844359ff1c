//! Brute-force retrieval and voting, the oracles for the ball tree and KNN.

use std::collections::BTreeMap;

use endofinder_core::hash::{BallTreeConfig, BallTreeIndex};
use endofinder_core::knn::classify_code;
use endofinder_core::{HashCode, QueryBudget, ReferenceRecord};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_code(rng: &mut ChaCha8Rng, bits: usize) -> HashCode {
    let b: Vec<bool> = (0..bits).map(|_| rng.random_bool(0.5)).collect();
    HashCode::from_bits(&b)
}

/// Flips `n` random bits of `code`.
pub fn perturb(rng: &mut ChaCha8Rng, code: &HashCode, n: usize) -> HashCode {
    let mut b = code.to_bools();
    for _ in 0..n {
        let i = rng.random_range(0..b.len());
        b[i] = !b[i];
    }
    HashCode::from_bits(&b)
}

pub fn bit_distance(a: &HashCode, b: &HashCode) -> u32 {
    a.to_bools().iter().zip(b.to_bools()).filter(|(x, y)| **x != *y).count() as u32
}

/// Full sort by (distance, id), keep the first k.
pub fn brute_knn(records: &[ReferenceRecord], q: &HashCode, k: usize) -> Vec<(String, u32)> {
    let mut all: Vec<(u32, &str)> = records.iter().map(|r| (bit_distance(q, &r.code), r.id.as_str())).collect();
    all.sort();
    all.into_iter().take(k).map(|(d, id)| (id.to_string(), d)).collect()
}

/// Mixes uniform codes with tight clusters so that equal distances are common.
pub fn corpus(rng: &mut ChaCha8Rng, n: usize, bits: usize) -> Vec<ReferenceRecord> {
    let seeds: Vec<HashCode> = (0..20).map(|_| random_code(rng, bits)).collect();
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    ids.into_iter()
        .map(|i| {
            let code = if i % 2 == 0 {
                random_code(rng, bits)
            } else {
                let s = &seeds[rng.random_range(0..seeds.len())];
                let flips = rng.random_range(0..6);
                perturb(rng, s, flips)
            };
            ReferenceRecord::new(format!("r{i:04}"), rng.random_range(1..=3), code)
        })
        .collect()
}

/// Majority over the K nearest; ties go to the class with the closest
/// member, then to the lower class index.
pub fn brute_vote(records: &[ReferenceRecord], q: &HashCode, k: usize) -> u32 {
    let mut all: Vec<(u32, &str, u32)> =
        records.iter().map(|r| (bit_distance(q, &r.code), r.id.as_str(), r.label)).collect();
    all.sort();
    let top = &all[..k];
    let mut counts: BTreeMap<u32, (usize, u32)> = BTreeMap::new();
    for (d, _, c) in top {
        let e = counts.entry(*c).or_insert((0, u32::MAX));
        e.0 += 1;
        e.1 = e.1.min(*d);
    }
    let best = counts.values().map(|v| v.0).max().unwrap();
    let mut tied: Vec<(u32, u32)> = counts.iter().filter(|(_, v)| v.0 == best).map(|(c, v)| (v.1, *c)).collect();
    tied.sort();
    tied[0].1
}


/// Ball tree ≡ brute force on 1,000 mixed 256-bit codes, 100 queries per
/// leaf capacity, k ∈ {1, 5, 10}. Returns the number of comparisons.
pub fn ball_tree_equivalence(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = corpus(&mut rng, 1000, 256);
    let mut compared = 0;
    for leaf in [1, 8, 32] {
        let cfg = BallTreeConfig {
            leaf_capacity: leaf,
            sample_size: 64,
            seed: leaf as u64,
        };
        let index = BallTreeIndex::build(records.clone(), &cfg).map_err(|e| e.to_string())?;
        index.audit().map_err(|e| e.to_string())?;
        for qi in 0..100 {
            let q = if qi % 2 == 0 {
                random_code(&mut rng, 256)
            } else {
                let r = &records[rng.random_range(0..records.len())];
                let flips = rng.random_range(0..4);
                perturb(&mut rng, &r.code, flips)
            };
            for k in [1, 5, 10] {
                let got: Vec<(String, u32)> = index
                    .query(&q, QueryBudget::k(k))
                    .map_err(|e| e.to_string())?
                    .into_iter()
                    .map(|n| (n.id, n.distance as u32))
                    .collect();
                if got != brute_knn(&records, &q, k) {
                    return Err(format!("leaf {leaf} query {qi} k {k}: ball tree and scan differ"));
                }
                compared += 1;
            }
        }
    }
    Ok(compared)
}

/// KNN classify (index and scan paths) ≡ brute-force vote on 200 records,
/// 50 queries, K ∈ {1, 3, 5}, for long codes and for short, tie-heavy ones.
pub fn knn_equivalence(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut compared = 0;
    for bits in [256, 16] {
        let records = corpus(&mut rng, 200, bits);
        let index = BallTreeIndex::build(records.clone(), &BallTreeConfig::default()).map_err(|e| e.to_string())?;
        for qi in 0..50 {
            let q = random_code(&mut rng, bits);
            for k in [1, 3, 5] {
                let want = brute_vote(&records, &q, k);
                let via_index = classify_code(&index, &q, k).map_err(|e| e.to_string())?;
                let via_scan = classify_code(&records, &q, k).map_err(|e| e.to_string())?;
                if via_index.predicted_label != want || via_scan != via_index || via_index.neighbors.len() != k {
                    return Err(format!("bits {bits} query {qi} k {k}: predicted {} vs oracle {want}", via_index.predicted_label));
                }
                compared += 1;
            }
        }
    }
    Ok(compared)
}
