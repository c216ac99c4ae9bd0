//! Little-endian cursor shared by the bundle and model codecs.

use crate::error::{CrlError, Result};

pub(crate) struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    /// Takes `n` bytes or fails with `TruncatedHeader(what)`.
    pub fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(CrlError::TruncatedHeader(what));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u32(&mut self, what: &'static str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn utf8(&mut self, len: usize, what: &'static str) -> Result<String> {
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| CrlError::InvalidUtf8(what))
    }

    /// Length-prefixed UTF-8 string.
    pub fn string(&mut self, what: &'static str) -> Result<String> {
        let len = self.u32(what)? as usize;
        self.utf8(len, what)
    }

    pub fn magic(&mut self, expected: &'static [u8; 8], name: &'static str) -> Result<()> {
        if self.remaining() < 8 || &self.buf[..8] != expected {
            return Err(CrlError::BadMagic { expected: name });
        }
        self.pos += 8;
        Ok(())
    }
}

/// Decodes `dim` little-endian f32 values, rejecting non-finite ones.
pub(crate) fn decode_f32s(bytes: &[u8], record: usize) -> Result<Vec<f32>> {
    bytes
        .chunks_exact(4)
        .enumerate()
        .map(|(index, c)| {
            let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(CrlError::NonFinite { record, index })
            }
        })
        .collect()
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_len(out: &mut Vec<u8>, len: usize, what: &str) -> Result<()> {
    let len = u32::try_from(len)
        .map_err(|_| CrlError::InvalidArgument(format!("{what} length {len} exceeds u32")))?;
    put_u32(out, len);
    Ok(())
}

pub(crate) fn put_str(out: &mut Vec<u8>, s: &str, what: &str) -> Result<()> {
    put_len(out, s.len(), what)?;
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

pub(crate) fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}
