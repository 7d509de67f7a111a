//! Instance-set bitmaps exchanged between parties. Bit i corresponds to
//! aligned row i; the byte layout is little-endian within each byte
//! (bit i lives at `bytes[i / 8] & (1 << (i % 8))`), and the wire carries
//! an explicit bit length so trailing padding is unambiguous.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitset {
    len: u32,
    bytes: Vec<u8>,
}

impl Bitset {
    pub fn new(len: usize) -> Result<Self> {
        if len > u32::MAX as usize {
            return Err(Error::validation("bitset length exceeds u32"));
        }
        Ok(Bitset {
            len: len as u32,
            bytes: vec![0u8; len.div_ceil(8)],
        })
    }

    pub fn from_indices(len: usize, indices: &[usize]) -> Result<Self> {
        let mut set = Bitset::new(len)?;
        for &i in indices {
            set.set(i)?;
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn set(&mut self, i: usize) -> Result<()> {
        if i >= self.len as usize {
            return Err(Error::validation(format!(
                "bit {i} outside bitset of length {}",
                self.len
            )));
        }
        self.bytes[i / 8] |= 1 << (i % 8);
        Ok(())
    }

    pub fn get(&self, i: usize) -> bool {
        i < self.len as usize && (self.bytes[i / 8] >> (i % 8)) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Set bits in ascending order.
    pub fn ones(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.count_ones());
        for (byte_idx, &b) in self.bytes.iter().enumerate() {
            let mut b = b;
            while b != 0 {
                let bit = b.trailing_zeros() as usize;
                out.push(byte_idx * 8 + bit);
                b &= b - 1;
            }
        }
        out
    }

    pub fn is_subset_of(&self, other: &Bitset) -> bool {
        self.len == other.len
            && self
                .bytes
                .iter()
                .zip(&other.bytes)
                .all(|(a, b)| a & !b == 0)
    }

    /// Rows of `self` that are not in `other` (same length required).
    pub fn difference(&self, other: &Bitset) -> Result<Bitset> {
        if self.len != other.len {
            return Err(Error::validation("bitset length mismatch in difference"));
        }
        let bytes = self
            .bytes
            .iter()
            .zip(&other.bytes)
            .map(|(a, b)| a & !b)
            .collect();
        Ok(Bitset {
            len: self.len,
            bytes,
        })
    }

    pub(crate) fn wire_parts(&self) -> (u32, &[u8]) {
        (self.len, &self.bytes)
    }

    pub(crate) fn from_wire(len: u32, bytes: Vec<u8>) -> Result<Self> {
        let expect = (len as usize).div_ceil(8);
        if bytes.len() != expect {
            return Err(Error::wire(format!(
                "bitset of {len} bits needs {expect} bytes, got {}",
                bytes.len()
            )));
        }
        // Padding bits beyond `len` must be zero to keep encodings unique.
        if len % 8 != 0 {
            if let Some(&last) = bytes.last() {
                if last >> (len % 8) != 0 {
                    return Err(Error::wire("bitset has nonzero padding bits"));
                }
            }
        }
        Ok(Bitset { len, bytes })
    }
}
