//! The `.endx` index file.
//!
//! ```text
//! magic   "ENDX1\0"
//! u32     code_bits
//! u64     record_count
//! record_count × { u16 id_len, id bytes, i32 label, ceil(code_bits/8) code bytes }
//! u32     leaf_capacity
//! u64     node_count
//! node_count × { u64 center_record, u32 radius, u8 kind,
//!                kind 0 (internal): u32 left, u32 right
//!                kind 1 (leaf):     u32 n, n × u64 record }
//! ```
//!
//! Nodes are stored in build order with the root first; a child always has a
//! larger node index than its parent. Little-endian throughout.

use std::fs;
use std::path::Path;

use super::balltree::{BallTreeIndex, Node};
use crate::domain::wire::{Reader, Writer};
use crate::domain::{validate_records, HashCode, ReferenceRecord};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"ENDX1\0";

const INTERNAL: u8 = 0;
const LEAF: u8 = 1;

impl BallTreeIndex {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new();
        w.bytes(MAGIC);
        w.u32(self.code_bits() as u32);
        w.u64(self.len() as u64);
        for r in self.records() {
            w.str16(&r.id)?;
            w.i32(i32::try_from(r.label).map_err(|_| {
                Error::InvalidConfig(format!("label {} does not fit in i32", r.label))
            })?);
            w.bytes(&r.code.to_bytes());
        }
        w.u32(self.leaf_capacity() as u32);
        w.u64(self.nodes.len() as u64);
        for n in &self.nodes {
            w.u64(u64::from(n.center));
            w.u32(n.radius);
            match n.children {
                Some((l, r)) => {
                    w.u8(INTERNAL);
                    w.u32(l);
                    w.u32(r);
                }
                None => {
                    w.u8(LEAF);
                    w.u32(n.len);
                    for &rec in &self.order[n.start as usize..(n.start + n.len) as usize] {
                        w.u64(u64::from(rec));
                    }
                }
            }
        }
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "endx");
        r.magic(MAGIC)?;
        let bits = r.u32()? as usize;
        if bits == 0 {
            return Err(r.corrupt("zero code length"));
        }
        let code_bytes = bits.div_ceil(8);
        let count = r.u64()?;
        let count = r.check_remaining(count, 2 + 4 + code_bytes)?;
        if count == 0 {
            return Err(r.corrupt("no records"));
        }
        let mut records = Vec::with_capacity(count);
        for _ in 0..count {
            let id = r.str16()?;
            let label = r.i32()?;
            if label < 1 {
                return Err(r.corrupt(format!("label {label} out of range")));
            }
            let at = r.offset();
            let code = HashCode::from_bytes(bits, r.take(code_bytes)?)
                .map_err(|e| Error::CorruptFile(format!("endx at offset {at}: {e}")))?;
            records.push(ReferenceRecord::new(id, label as u32, code));
        }
        validate_records(&records, None)
            .map_err(|e| Error::CorruptFile(format!("endx records: {e}")))?;

        let leaf_capacity = r.u32()? as usize;
        let n_nodes = r.u64()?;
        let n_nodes = r.check_remaining(n_nodes, 8 + 4 + 1 + 4)?;
        if n_nodes == 0 {
            return Err(r.corrupt("empty node table"));
        }

        enum Raw {
            Internal(u32, u32),
            Leaf(Vec<u32>),
        }
        let mut raw = Vec::with_capacity(n_nodes);
        for i in 0..n_nodes {
            let center = r.u64()?;
            if center >= count as u64 {
                return Err(r.corrupt(format!("node {i} center {center} out of range")));
            }
            let radius = r.u32()?;
            let body = match r.u8()? {
                INTERNAL => {
                    let (a, b) = (r.u32()?, r.u32()?);
                    let valid = |c: u32| (c as usize) > i && (c as usize) < n_nodes;
                    if !valid(a) || !valid(b) || a == b {
                        return Err(r.corrupt(format!("node {i} has invalid children")));
                    }
                    Raw::Internal(a, b)
                }
                LEAF => {
                    let n = r.u32()?;
                    let n = r.check_remaining(u64::from(n), 8)?;
                    let recs = (0..n)
                        .map(|_| {
                            let v = r.u64()?;
                            if v >= count as u64 {
                                return Err(r.corrupt(format!("leaf record {v} out of range")));
                            }
                            Ok(v as u32)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Raw::Leaf(recs)
                }
                other => return Err(r.corrupt(format!("unknown node kind {other}"))),
            };
            raw.push((center as u32, radius, body));
        }
        if !r.is_empty() {
            return Err(r.corrupt("trailing bytes"));
        }

        // Depth-first from the root to recover contiguous leaf ranges.
        let mut nodes: Vec<Option<Node>> = vec![None; n_nodes];
        let mut order = Vec::with_capacity(count);
        let mut stack = vec![(0usize, false)];
        while let Some((i, done)) = stack.pop() {
            let (center, radius, body) = &raw[i];
            match body {
                Raw::Leaf(recs) => {
                    if nodes[i].is_some() {
                        return Err(Error::CorruptFile(format!("endx: node {i} reached twice")));
                    }
                    let start = order.len() as u32;
                    order.extend_from_slice(recs);
                    nodes[i] = Some(Node {
                        center: *center,
                        radius: *radius,
                        start,
                        len: recs.len() as u32,
                        children: None,
                    });
                }
                Raw::Internal(a, b) if !done => {
                    if nodes[i].is_some() {
                        return Err(Error::CorruptFile(format!("endx: node {i} reached twice")));
                    }
                    nodes[i] = Some(Node {
                        center: *center,
                        radius: *radius,
                        start: order.len() as u32,
                        len: 0,
                        children: Some((*a, *b)),
                    });
                    stack.push((i, true));
                    stack.push((*b as usize, false));
                    stack.push((*a as usize, false));
                }
                Raw::Internal(..) => {
                    let node = nodes[i].as_mut().expect("opened above");
                    node.len = order.len() as u32 - node.start;
                }
            }
        }
        let nodes = nodes
            .into_iter()
            .enumerate()
            .map(|(i, n)| n.ok_or_else(|| Error::CorruptFile(format!("endx: node {i} unreachable"))))
            .collect::<Result<Vec<_>>>()?;
        if order.len() != count {
            return Err(Error::CorruptFile("endx: leaves do not cover every record".into()));
        }

        let index = BallTreeIndex::assemble(bits, leaf_capacity, records, nodes, order)?;
        index.audit()?;
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
