//! Little-endian cursor used by the binary formats.

use crate::error::{Error, Result};

pub(crate) struct ByteReader<'a> {
    format: &'static str,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(format: &'static str, buf: &'a [u8]) -> Self {
        Self { format, buf, pos: 0 }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn error(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Decode {
            format: self.format,
            offset,
            message: message.into(),
        }
    }

    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.error(
                self.pos,
                format!(
                    "truncated {what}: need {n} bytes, {} available ({} missing)",
                    self.remaining(),
                    n - self.remaining()
                ),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.array::<1>(what)?[0])
    }

    pub fn u16(&mut self, what: &str) -> Result<u16> {
        self.array(what).map(u16::from_le_bytes)
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        self.array(what).map(u32::from_le_bytes)
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        self.array(what).map(u64::from_le_bytes)
    }

    pub fn f32(&mut self, what: &str) -> Result<f32> {
        self.array(what).map(f32::from_le_bytes)
    }

    pub fn f64(&mut self, what: &str) -> Result<f64> {
        self.array(what).map(f64::from_le_bytes)
    }

    /// Byte length of `count` items of `item_size` bytes; errors on overflow.
    pub fn sized(&self, count: u64, item_size: u64, what: &str) -> Result<usize> {
        count
            .checked_mul(item_size)
            .and_then(|n| usize::try_from(n).ok())
            .ok_or_else(|| self.error(self.pos, format!("{what} size overflows")))
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(self.error(self.pos, format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}
