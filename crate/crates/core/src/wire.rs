//! Canonical binary encoding (wire format v1).
//!
//! Every hashed or signed value in the crate goes through this encoding, so
//! the byte layout is fixed:
//!
//! * integers: 8 bytes, big-endian, no prefix
//! * byte strings, UTF-8 strings and nested records: 4-byte big-endian
//!   length prefix followed by the raw bytes
//! * lists: 4-byte big-endian element count, then each element
//! * enum variants: a single tag byte before the variant's fields
//!
//! Decoding is strict: lengths must match fixed-size fields exactly and a
//! top-level decode must consume its whole input.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("unexpected end of input at offset {0}")]
    Truncated(usize),
    #[error("field length {found} does not match expected {expected}")]
    BadLength { expected: usize, found: usize },
    #[error("unknown tag {0:#04x}")]
    UnknownTag(u8),
    #[error("invalid UTF-8 in string field")]
    Utf8,
    #[error("{0} trailing bytes after value")]
    Trailing(usize),
    #[error("invalid value: {0}")]
    Invalid(&'static str),
}

/// Append-only writer for the canonical encoding.
#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(cap: usize) -> Self {
        Self {
            buf: Vec::with_capacity(cap),
        }
    }

    pub fn tag(&mut self, tag: u8) -> &mut Self {
        self.buf.push(tag);
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.len_prefix(b.len());
        self.buf.extend_from_slice(b);
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn count(&mut self, n: usize) -> &mut Self {
        self.len_prefix(n);
        self
    }

    /// Writes a length-prefixed nested record produced by `f`.
    pub fn nested(&mut self, f: impl FnOnce(&mut Encoder)) -> &mut Self {
        let at = self.buf.len();
        self.buf.extend_from_slice(&[0; 4]);
        f(self);
        let len = self.buf.len() - at - 4;
        let len = u32::try_from(len).expect("nested record exceeds 4 GiB");
        self.buf[at..at + 4].copy_from_slice(&len.to_be_bytes());
        self
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn clear(&mut self) {
        self.buf.clear();
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.buf
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    fn len_prefix(&mut self, n: usize) {
        let n = u32::try_from(n).expect("length exceeds 4 GiB");
        self.buf.extend_from_slice(&n.to_be_bytes());
    }
}

/// Cursor over canonical bytes.
#[derive(Debug, Clone)]
pub struct Decoder<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.remaining() < n {
            return Err(WireError::Truncated(self.pos));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn tag(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        let b = self.take(8)?;
        Ok(u64::from_be_bytes(b.try_into().expect("8 bytes")))
    }

    fn u32(&mut self) -> Result<usize, WireError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], WireError> {
        let n = self.u32()?;
        self.take(n)
    }

    pub fn fixed<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        let b = self.bytes()?;
        b.try_into().map_err(|_| WireError::BadLength {
            expected: N,
            found: b.len(),
        })
    }

    pub fn string(&mut self) -> Result<String, WireError> {
        let b = self.bytes()?;
        String::from_utf8(b.to_vec()).map_err(|_| WireError::Utf8)
    }

    pub fn count(&mut self) -> Result<usize, WireError> {
        let n = self.u32()?;
        // every element occupies at least one byte
        if n > self.remaining() {
            return Err(WireError::Truncated(self.pos));
        }
        Ok(n)
    }

    /// Decodes a length-prefixed nested record, requiring `f` to consume it
    /// exactly.
    pub fn nested<T>(
        &mut self,
        f: impl FnOnce(&mut Decoder<'a>) -> Result<T, WireError>,
    ) -> Result<T, WireError> {
        let body = self.bytes()?;
        let mut inner = Decoder::new(body);
        let v = f(&mut inner)?;
        inner.finish()?;
        Ok(v)
    }

    pub fn finish(&self) -> Result<(), WireError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(WireError::Trailing(n)),
        }
    }
}
