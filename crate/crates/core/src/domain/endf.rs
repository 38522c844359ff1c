//! The `.endf` embedding file.
//!
//! ```text
//! magic   "ENDF1\0"
//! u32     dim
//! u64     count
//! count × { u16 id_len, id bytes (UTF-8), i32 label, dim × f32 }
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::wire::{Reader, Writer};
use super::{EmbeddingVector, ReferenceRecord};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"ENDF1\0";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub label: i32,
    pub embedding: EmbeddingVector,
}

impl EmbeddingRecord {
    /// The reference-database form; labels must be class indices (≥ 1).
    pub fn to_reference(&self) -> Result<ReferenceRecord> {
        let label = u32::try_from(self.label)
            .ok()
            .filter(|&l| l >= 1)
            .ok_or_else(|| Error::InvalidConfig(format!("record {:?} has label {} below 1", self.id, self.label)))?;
        Ok(ReferenceRecord::from_embedding(self.id.clone(), label, self.embedding.clone()))
    }
}

pub fn encode(dim: usize, records: &[EmbeddingRecord]) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u32(u32::try_from(dim).map_err(|_| Error::InvalidConfig("dim exceeds u32".into()))?);
    w.u64(records.len() as u64);
    for r in records {
        if r.embedding.dim() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                found: r.embedding.dim(),
            });
        }
        w.str16(&r.id)?;
        w.i32(r.label);
        for v in r.embedding.as_slice() {
            w.f32(*v as f32);
        }
    }
    Ok(w.finish())
}

pub fn decode(bytes: &[u8]) -> Result<(usize, Vec<EmbeddingRecord>)> {
    let mut r = Reader::new(bytes, "endf");
    r.magic(MAGIC)?;
    let dim = r.u32()? as usize;
    if dim == 0 {
        return Err(r.corrupt("zero dimension"));
    }
    let count = r.u64()?;
    let count = r.check_remaining(count, 2 + 4 + 4 * dim)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let id = r.str16()?;
        let label = r.i32()?;
        let at = r.offset();
        let values = (0..dim)
            .map(|_| r.f32().map(f64::from))
            .collect::<Result<Vec<_>>>()?;
        let embedding = EmbeddingVector::from_values(values).map_err(|_| {
            Error::CorruptFile(format!("endf at offset {at}: non-finite embedding value"))
        })?;
        out.push(EmbeddingRecord {
            id,
            label,
            embedding,
        });
    }
    if !r.is_empty() {
        return Err(r.corrupt("trailing bytes"));
    }
    Ok((dim, out))
}

pub fn write(path: impl AsRef<Path>, dim: usize, records: &[EmbeddingRecord]) -> Result<()> {
    fs::write(path, encode(dim, records)?)?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<(usize, Vec<EmbeddingRecord>)> {
    decode(&fs::read(path)?)
}
