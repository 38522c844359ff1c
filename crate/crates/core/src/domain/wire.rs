//! Little-endian encoding helpers for the binary file formats.

use crate::error::{Error, Result};

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self { buf: Vec::new() }
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn i32(&mut self, v: i32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn str16(&mut self, s: &str) -> Result<()> {
        let len = u16::try_from(s.len())
            .map_err(|_| Error::InvalidConfig(format!("id longer than 65535 bytes: {s:.32}…")))?;
        self.u16(len);
        self.bytes(s.as_bytes());
        Ok(())
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8], what: &'static str) -> Self {
        Self { buf, pos: 0, what }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn corrupt(&self, msg: impl std::fmt::Display) -> Error {
        Error::CorruptFile(format!("{} at offset {}: {msg}", self.what, self.pos))
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.corrupt(format!("truncated, wanted {n} more bytes")));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    pub fn str16(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        let at = self.pos;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| {
            Error::CorruptFile(format!("{} at offset {at}: id is not UTF-8", self.what))
        })
    }

    /// Checks a 6-byte `XXXX<version>\0` magic. A known prefix with another
    /// version byte is a version mismatch; anything else is corruption.
    pub fn magic(&mut self, expected: &[u8; 6]) -> Result<()> {
        let got = self.take(6).map_err(|_| self.corrupt("missing magic"))?;
        if got == expected {
            return Ok(());
        }
        if got[..4] == expected[..4] && got[5] == 0 {
            return Err(Error::VersionMismatch {
                found: String::from_utf8_lossy(&got[..5]).into_owned(),
            });
        }
        Err(Error::CorruptFile(format!("{}: bad magic {:?}", self.what, got)))
    }

    /// Guards count-driven allocations against absurd headers.
    pub fn check_remaining(&self, count: u64, min_bytes_each: usize) -> Result<usize> {
        let remaining = (self.buf.len() - self.pos) as u64;
        match count.checked_mul(min_bytes_each as u64) {
            Some(need) if need <= remaining => Ok(count as usize),
            _ => Err(self.corrupt(format!("count {count} exceeds file size"))),
        }
    }
}
