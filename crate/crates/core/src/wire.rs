//! Big-endian, length-prefixed binary encoding shared by every file format in
//! the crate.
//!
//! Variable-size fields carry an explicit length prefix whose width is chosen
//! by the format (u16 for identifiers, u32 for key material and signatures,
//! u64 for payloads). Readers reject trailing bytes so that every accepted
//! encoding is canonical.

use num_bigint::BigUint;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("truncated input: needed {needed} bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("{0} trailing bytes after encoding")]
    Trailing(usize),
    #[error("invalid field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl WireError {
    pub fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        WireError::Invalid {
            field,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_magic(magic: &[u8; 4], version: u16) -> Self {
        let mut w = Self::new();
        w.raw(magic);
        w.u16(version);
        w
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.buf
    }

    pub fn raw(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u16(&mut self, v: u16) -> &mut Self {
        self.raw(&v.to_be_bytes())
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.raw(&v.to_be_bytes())
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.raw(&v.to_be_bytes())
    }

    pub fn bytes16(&mut self, b: &[u8]) -> &mut Self {
        let len = u16::try_from(b.len()).expect("field longer than u16 prefix allows");
        self.u16(len).raw(b)
    }

    pub fn bytes32(&mut self, b: &[u8]) -> &mut Self {
        let len = u32::try_from(b.len()).expect("field longer than u32 prefix allows");
        self.u32(len).raw(b)
    }

    pub fn bytes64(&mut self, b: &[u8]) -> &mut Self {
        self.u64(b.len() as u64).raw(b)
    }

    pub fn str16(&mut self, s: &str) -> &mut Self {
        self.bytes16(s.as_bytes())
    }

    /// Minimal big-endian magnitude with a 32-bit length prefix. Zero encodes
    /// as a zero-length field.
    pub fn uint(&mut self, v: &BigUint) -> &mut Self {
        let bytes = if v.bits() == 0 {
            Vec::new()
        } else {
            v.to_bytes_be()
        };
        self.bytes32(&bytes)
    }

    /// Fixed-width big-endian encoding, left-padded with zeros.
    pub fn uint_fixed(&mut self, v: &BigUint, width: usize) -> &mut Self {
        self.raw(&to_fixed_be(v, width))
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

pub fn to_fixed_be(v: &BigUint, width: usize) -> Vec<u8> {
    let bytes = if v.bits() == 0 {
        Vec::new()
    } else {
        v.to_bytes_be()
    };
    assert!(bytes.len() <= width, "integer wider than field");
    let mut out = vec![0u8; width - bytes.len()];
    out.extend_from_slice(&bytes);
    out
}

#[derive(Debug, Clone)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    /// Checks magic and returns the format version.
    pub fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<u16, WireError> {
        let found = self.take(4)?;
        if found != magic {
            return Err(WireError::BadMagic {
                expected: *magic,
                found: found.to_vec(),
            });
        }
        self.u16()
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.remaining() < n {
            return Err(WireError::Truncated {
                offset: self.pos,
                needed: n,
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn bytes16(&mut self) -> Result<&'a [u8], WireError> {
        let n = self.u16()? as usize;
        self.take(n)
    }

    pub fn bytes32(&mut self) -> Result<&'a [u8], WireError> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    pub fn bytes64(&mut self) -> Result<&'a [u8], WireError> {
        let n = self.u64()?;
        let n = usize::try_from(n).map_err(|_| WireError::Truncated {
            offset: self.pos,
            needed: usize::MAX,
        })?;
        self.take(n)
    }

    pub fn str16(&mut self, field: &'static str) -> Result<String, WireError> {
        let b = self.bytes16()?;
        String::from_utf8(b.to_vec()).map_err(|_| WireError::invalid(field, "not UTF-8"))
    }

    /// Reads a minimal big-endian integer written by [`Writer::uint`].
    pub fn uint(&mut self, field: &'static str) -> Result<BigUint, WireError> {
        let b = self.bytes32()?;
        if b.first() == Some(&0) {
            return Err(WireError::invalid(field, "non-minimal integer encoding"));
        }
        Ok(BigUint::from_bytes_be(b))
    }

    pub fn uint_fixed(&mut self, width: usize) -> Result<BigUint, WireError> {
        Ok(BigUint::from_bytes_be(self.take(width)?))
    }

    pub fn finish(&self) -> Result<(), WireError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(WireError::Trailing(n)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uint_rejects_leading_zero() {
        let mut w = Writer::new();
        w.bytes32(&[0, 5]);
        let bytes = w.into_bytes();
        assert!(Reader::new(&bytes).uint("x").is_err());
    }

    #[test]
    fn zero_is_empty_field() {
        let mut w = Writer::new();
        w.uint(&BigUint::from(0u8));
        assert_eq!(w.as_slice(), &[0, 0, 0, 0]);
        let bytes = w.into_bytes();
        let mut r = Reader::new(&bytes);
        assert_eq!(r.uint("x").unwrap(), BigUint::from(0u8));
        r.finish().unwrap();
    }

    #[test]
    fn truncation_is_reported() {
        let mut r = Reader::new(&[0, 0, 0, 9, 1]);
        assert!(matches!(r.bytes32(), Err(WireError::Truncated { .. })));
    }

    #[test]
    fn magic_mismatch() {
        let mut w = Writer::with_magic(b"SUIT", 1);
        w.u8(1);
        let bytes = w.into_bytes();
        assert!(Reader::new(&bytes).expect_magic(b"CERT").is_err());
        let mut r = Reader::new(&bytes);
        assert_eq!(r.expect_magic(b"SUIT").unwrap(), 1);
    }
}
