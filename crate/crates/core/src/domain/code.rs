use std::fmt;

use crate::error::{Error, Result};

/// A packed binary code of fixed bit length.
///
/// Bit `k` lives in word `k / 64` at position `63 - k % 64`, so the big-endian
/// bytes of the words are exactly the MSB-first packed byte form. Pad bits past
/// `bits` are always zero.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct HashCode {
    bits: usize,
    words: Vec<u64>,
}

impl HashCode {
    pub fn from_bits(bits: &[bool]) -> Self {
        let mut words = vec![0u64; bits.len().div_ceil(64)];
        for (k, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
            words[k / 64] |= 1u64 << (63 - k % 64);
        }
        Self {
            bits: bits.len(),
            words,
        }
    }

    /// Parses MSB-first packed bytes; rejects wrong lengths and nonzero pad bits.
    pub fn from_bytes(bits: usize, bytes: &[u8]) -> Result<Self> {
        let n_bytes = bits.div_ceil(8);
        if bytes.len() != n_bytes {
            return Err(Error::DimMismatch {
                expected: n_bytes,
                found: bytes.len(),
            });
        }
        let mut words = vec![0u64; bits.div_ceil(64)];
        for (i, chunk) in bytes.chunks(8).enumerate() {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            words[i] = u64::from_be_bytes(buf);
        }
        let code = Self { bits, words };
        if code.pad_is_dirty() {
            return Err(Error::CorruptFile("hash code has nonzero pad bits".into()));
        }
        Ok(code)
    }

    pub fn from_hex(bits: usize, hex: &str) -> Result<Self> {
        let hex = hex.trim();
        if hex.len() % 2 != 0 {
            return Err(Error::CorruptFile("odd-length hex string".into()));
        }
        let bytes = (0..hex.len())
            .step_by(2)
            .map(|i| {
                hex.get(i..i + 2)
                    .and_then(|s| u8::from_str_radix(s, 16).ok())
                    .ok_or_else(|| Error::CorruptFile(format!("invalid hex at offset {i}")))
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::from_bytes(bits, &bytes)
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, k: usize) -> bool {
        assert!(k < self.bits, "bit {k} out of range for {}-bit code", self.bits);
        self.words[k / 64] >> (63 - k % 64) & 1 == 1
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.bits).map(|k| self.bit(k)).collect()
    }

    /// The code as a ±1 vector.
    pub fn to_signs(&self) -> Vec<f64> {
        (0..self.bits)
            .map(|k| if self.bit(k) { 1.0 } else { -1.0 })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_be_bytes()).collect();
        out.truncate(self.bits.div_ceil(8));
        out
    }

    pub fn to_hex(&self) -> String {
        self.to_bytes().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Bitwise complement over the `bits` valid bits.
    pub fn complement(&self) -> Self {
        let mut words: Vec<u64> = self.words.iter().map(|w| !w).collect();
        if let Some(last) = words.last_mut() {
            *last &= Self::tail_mask(self.bits);
        }
        Self {
            bits: self.bits,
            words,
        }
    }

    fn tail_mask(bits: usize) -> u64 {
        match bits % 64 {
            0 => u64::MAX,
            r => !(u64::MAX >> r),
        }
    }

    fn pad_is_dirty(&self) -> bool {
        self.words
            .last()
            .is_some_and(|w| w & !Self::tail_mask(self.bits) != 0)
    }
}

impl fmt::Debug for HashCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HashCode({}b:{})", self.bits, self.to_hex())
    }
}
