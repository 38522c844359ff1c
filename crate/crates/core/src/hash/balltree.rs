//! An exact k-nearest-neighbor ball tree over packed binary codes.
//!
//! Every node is a ball around one of its own records. Construction splits a
//! node around two far-apart poles picked from a seeded sample; search is
//! best-first over node lower bounds `max(0, d(q, center) − radius)` and stops
//! once no unvisited ball can hold a better candidate than the current k-th.
//! Records of a subtree occupy a contiguous range of the leaf order.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{hamming_words, QueryBudget};
use crate::domain::{validate_records, HashCode, Neighbor, ReferenceRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BallTreeConfig {
    pub leaf_capacity: usize,
    /// Records sampled per node when choosing its center and split poles.
    pub sample_size: usize,
    pub seed: u64,
}

impl Default for BallTreeConfig {
    fn default() -> Self {
        Self {
            leaf_capacity: 32,
            sample_size: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(super) struct Node {
    pub center: u32,
    pub radius: u32,
    pub start: u32,
    pub len: u32,
    pub children: Option<(u32, u32)>,
}

/// Read-only view of one node, for audits and tooling.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeView<'a> {
    pub center: &'a ReferenceRecord,
    pub radius: u32,
    pub records: Vec<&'a ReferenceRecord>,
    pub children: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct BallTreeIndex {
    bits: usize,
    words: usize,
    leaf_capacity: usize,
    records: Vec<ReferenceRecord>,
    /// Position of each record in ascending-id order; the tie-break key.
    id_rank: Vec<u32>,
    /// Inverse of `id_rank`.
    by_rank: Vec<u32>,
    pub(super) nodes: Vec<Node>,
    /// Record indices in leaf order.
    pub(super) order: Vec<u32>,
    /// Codes laid out in leaf order, `words` u64s each.
    leaf_codes: Vec<u64>,
    /// Center codes per node, `words` u64s each.
    center_codes: Vec<u64>,
}

impl BallTreeIndex {
    pub fn build(records: Vec<ReferenceRecord>, cfg: &BallTreeConfig) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        if cfg.leaf_capacity == 0 || cfg.sample_size < 2 {
            return Err(Error::InvalidConfig(
                "leaf_capacity must be >= 1 and sample_size >= 2".into(),
            ));
        }
        if records.len() > u32::MAX as usize {
            return Err(Error::InvalidConfig("too many records".into()));
        }
        validate_records(&records, None)?;
        let bits = records[0].code.bits();

        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("popcnt") {
            // SAFETY: the running CPU supports POPCNT.
            let (nodes, order) = unsafe { partition_popcnt(&records, bits, cfg) };
            return Self::assemble(bits, cfg.leaf_capacity, records, nodes, order);
        }
        let (nodes, order) = partition(&records, bits, cfg);
        Self::assemble(bits, cfg.leaf_capacity, records, nodes, order)
    }

    /// Builds the derived lookup tables. Used by `build` and by `load`.
    pub(super) fn assemble(
        bits: usize,
        leaf_capacity: usize,
        records: Vec<ReferenceRecord>,
        nodes: Vec<Node>,
        order: Vec<u32>,
    ) -> Result<Self> {
        let words = bits.div_ceil(64);
        let mut by_id: Vec<u32> = (0..records.len() as u32).collect();
        by_id.sort_by(|&a, &b| records[a as usize].id.cmp(&records[b as usize].id));
        let mut id_rank = vec![0u32; records.len()];
        for (rank, &i) in by_id.iter().enumerate() {
            id_rank[i as usize] = rank as u32;
        }
        let leaf_codes = order
            .iter()
            .flat_map(|&i| records[i as usize].code.words().iter().copied())
            .collect();
        let center_codes = nodes
            .iter()
            .flat_map(|n| records[n.center as usize].code.words().iter().copied())
            .collect();
        Ok(Self {
            bits,
            words,
            leaf_capacity,
            records,
            id_rank,
            by_rank: by_id,
            nodes,
            order,
            leaf_codes,
            center_codes,
        })
    }

    pub fn code_bits(&self) -> usize {
        self.bits
    }

    pub fn leaf_capacity(&self) -> usize {
        self.leaf_capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ReferenceRecord] {
        &self.records
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, i: usize) -> NodeView<'_> {
        let n = &self.nodes[i];
        NodeView {
            center: &self.records[n.center as usize],
            radius: n.radius,
            records: self.order[n.start as usize..(n.start + n.len) as usize]
                .iter()
                .map(|&r| &self.records[r as usize])
                .collect(),
            children: n.children.map(|(a, b)| (a as usize, b as usize)),
        }
    }

    #[inline]
    fn center_code(&self, node: usize) -> &[u64] {
        &self.center_codes[node * self.words..(node + 1) * self.words]
    }

    /// Exact k nearest by Hamming distance, ties by ascending id; identical to
    /// [`super::linear_scan`] over the same records.
    pub fn query(&self, code: &HashCode, budget: QueryBudget) -> Result<Vec<Neighbor>> {
        if code.bits() != self.bits {
            return Err(Error::DimMismatch {
                expected: self.bits,
                found: code.bits(),
            });
        }
        if budget.k > self.records.len() {
            return Err(Error::KTooLarge {
                k: budget.k,
                n: self.records.len(),
            });
        }
        if budget.k == 0 {
            return Ok(Vec::new());
        }
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("popcnt") {
            // SAFETY: the running CPU supports POPCNT.
            return Ok(unsafe { self.search_popcnt(code.words(), budget) });
        }
        Ok(self.search(code.words(), budget))
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "popcnt")]
    unsafe fn search_popcnt(&self, q: &[u64], budget: QueryBudget) -> Vec<Neighbor> {
        self.search(q, budget)
    }

    /// Best-first descent with a bounded max-heap of (distance, id rank) keys.
    #[inline(always)]
    fn search(&self, q: &[u64], budget: QueryBudget) -> Vec<Neighbor> {
        let k = budget.k;
        let cutoff = budget.max_distance.unwrap_or(u32::MAX);
        let key = |d: u32, rec: u32| (u64::from(d) << 32) | u64::from(self.id_rank[rec as usize]);

        // Max-heap of the best keys found so far.
        let mut best: BinaryHeap<u64> = BinaryHeap::with_capacity(k + 1);
        let mut frontier: BinaryHeap<Reverse<(u32, u32)>> = BinaryHeap::new();
        let root_lb = hamming_words(q, self.center_code(0)).saturating_sub(self.nodes[0].radius);
        frontier.push(Reverse((root_lb, 0)));

        while let Some(Reverse((lb, node))) = frontier.pop() {
            if lb > cutoff {
                break;
            }
            if best.len() == k && u64::from(lb) << 32 > *best.peek().expect("full") {
                break;
            }
            let n = &self.nodes[node as usize];
            match n.children {
                Some((l, r)) => {
                    for child in [l, r] {
                        let c = &self.nodes[child as usize];
                        let clb = hamming_words(q, self.center_code(child as usize))
                            .saturating_sub(c.radius);
                        let prunable = clb > cutoff
                            || (best.len() == k && u64::from(clb) << 32 > *best.peek().expect("full"));
                        if !prunable {
                            frontier.push(Reverse((clb, child)));
                        }
                    }
                }
                None => {
                    let (s, e) = (n.start as usize, (n.start + n.len) as usize);
                    for pos in s..e {
                        let d = hamming_words(q, &self.leaf_codes[pos * self.words..(pos + 1) * self.words]);
                        if d > cutoff {
                            continue;
                        }
                        let kk = key(d, self.order[pos]);
                        if best.len() < k {
                            best.push(kk);
                        } else if kk < *best.peek().expect("full") {
                            best.pop();
                            best.push(kk);
                        }
                    }
                }
            }
        }

        best
            .into_sorted_vec()
            .into_iter()
            .map(|kk| {
                let r = &self.records[self.by_rank[(kk & 0xffff_ffff) as usize] as usize];
                Neighbor {
                    id: r.id.clone(),
                    label: r.label,
                    distance: (kk >> 32) as f64,
                }
            })
            .collect()
    }

    /// Structural check: subtree ranges nest, every record appears once and
    /// lies within the radius of every ball that contains it.
    pub fn audit(&self) -> Result<()> {
        let n = self.records.len();
        let mut seen = vec![false; n];
        for &r in &self.order {
            if r as usize >= n || std::mem::replace(&mut seen[r as usize], true) {
                return Err(Error::CorruptFile(format!("record {r} missing or repeated in tree")));
            }
        }
        if self.order.len() != n || self.nodes.is_empty() {
            return Err(Error::CorruptFile("tree does not cover every record".into()));
        }
        let root = &self.nodes[0];
        if root.start != 0 || root.len as usize != n {
            return Err(Error::CorruptFile("root does not span all records".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let (s, e) = (node.start as usize, node.start as usize + node.len as usize);
            if node.len == 0 || e > n || node.center as usize >= n {
                return Err(Error::CorruptFile(format!("node {i} has an invalid range")));
            }
            if !self.order[s..e].contains(&node.center) {
                return Err(Error::CorruptFile(format!("node {i} center lies outside its ball")));
            }
            for pos in s..e {
                let d = hamming_words(
                    self.center_code(i),
                    &self.leaf_codes[pos * self.words..(pos + 1) * self.words],
                );
                if d > node.radius {
                    return Err(Error::CorruptFile(format!("node {i} radius {} < {d}", node.radius)));
                }
            }
            if let Some((l, r)) = node.children {
                let (l, r) = (l as usize, r as usize);
                if l <= i || r <= i || l >= self.nodes.len() || r >= self.nodes.len() {
                    return Err(Error::CorruptFile(format!("node {i} has invalid children")));
                }
                let (a, b) = (&self.nodes[l], &self.nodes[r]);
                if a.start != node.start || a.start + a.len != b.start || a.len + b.len != node.len {
                    return Err(Error::CorruptFile(format!("node {i} children do not partition it")));
                }
            }
        }
        Ok(())
    }
}


/// Top-down farthest-pole partition; returns the node table and record order.
#[inline(always)]
fn partition(records: &[ReferenceRecord], bits: usize, cfg: &BallTreeConfig) -> (Vec<Node>, Vec<u32>) {
    let words = bits.div_ceil(64);
    let codes: Vec<u64> = records.iter().flat_map(|r| r.code.words().iter().copied()).collect();
    let code = |i: u32| &codes[i as usize * words..(i as usize + 1) * words];
    let dist = |a: u32, b: u32| hamming_words(code(a), code(b));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<u32> = (0..records.len() as u32).collect();
    let mut nodes: Vec<Node> = Vec::new();
    let mut scratch_left = Vec::new();
    let mut scratch_right = Vec::new();
    // (parent, is_left, lo, hi)
    let mut stack: Vec<(Option<(usize, bool)>, usize, usize)> = vec![(None, 0, records.len())];

    while let Some((parent, lo, hi)) = stack.pop() {
        let slice = &order[lo..hi];
        let picks: Vec<u32> = if slice.len() <= cfg.sample_size {
            slice.to_vec()
        } else {
            sample(&mut rng, slice.len(), cfg.sample_size)
                .into_iter()
                .map(|j| slice[j])
                .collect()
        };

        // Center: the sampled record with the smallest covering radius.
        let (center, radius) = picks
            .iter()
            .map(|&c| (c, slice.iter().map(|&r| dist(c, r)).max().unwrap_or(0)))
            .min_by_key(|&(c, rad)| (rad, c))
            .expect("nonempty node");

        let id = nodes.len();
        nodes.push(Node {
            center,
            radius,
            start: lo as u32,
            len: (hi - lo) as u32,
            children: None,
        });
        if let Some((p, is_left)) = parent {
            let slot = nodes[p].children.get_or_insert((0, 0));
            if is_left {
                slot.0 = id as u32;
            } else {
                slot.1 = id as u32;
            }
        }
        if hi - lo <= cfg.leaf_capacity || radius == 0 {
            continue;
        }

        // Poles: the farthest sampled pair, else the record farthest from the first pick.
        let mut poles = (picks[0], picks[0], 0u32);
        for (a_i, &a) in picks.iter().enumerate() {
            for &b in &picks[a_i + 1..] {
                let d = dist(a, b);
                if d > poles.2 {
                    poles = (a, b, d);
                }
            }
        }
        if poles.2 == 0 {
            let far = slice
                .iter()
                .copied()
                .max_by_key(|&r| (dist(poles.0, r), Reverse(r)))
                .expect("nonempty");
            poles = (poles.0, far, dist(poles.0, far));
        }
        let (pa, pb) = (poles.0, poles.1);

        scratch_left.clear();
        scratch_right.clear();
        for &r in slice {
            let (da, db) = (dist(pa, r), dist(pb, r));
            if da < db || (da == db && scratch_left.len() <= scratch_right.len()) {
                scratch_left.push(r);
            } else {
                scratch_right.push(r);
            }
        }
        let mid = lo + scratch_left.len();
        order[lo..mid].copy_from_slice(&scratch_left);
        order[mid..hi].copy_from_slice(&scratch_right);
        stack.push((Some((id, false)), mid, hi));
        stack.push((Some((id, true)), lo, mid));
    }

    (nodes, order)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "popcnt")]
unsafe fn partition_popcnt(records: &[ReferenceRecord], bits: usize, cfg: &BallTreeConfig) -> (Vec<Node>, Vec<u32>) {
    partition(records, bits, cfg)
}
