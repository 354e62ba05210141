//! Bit-exact wire format for sparse sign messages.
//!
//! Layout, MSB first, every field big-endian:
//!
//! ```text
//! [count : ceil(log2(N+1)) bits]
//! count × [gap : ceil(log2 N) bits][sign : 1 bit]
//! ```
//!
//! The first gap is the first index itself; each later gap is the distance to
//! the previous index and must be nonzero. A sign bit of 1 means `+1`.

use serde::{Deserialize, Serialize};

use crate::compression::{Sign, SparseSignVector};
use crate::error::{Error, Result};

/// Packed bits. Only the first `bit_len` bits are meaningful; trailing bits of
/// the last byte are zero.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bitstream {
    bytes: Vec<u8>,
    bit_len: usize,
}

impl Bitstream {
    pub fn from_parts(bytes: Vec<u8>, bit_len: usize) -> Result<Self> {
        if bytes.len() != bit_len.div_ceil(8) {
            return Err(Error::format(
                "bitstream",
                format!("{} bytes cannot hold exactly {bit_len} bits", bytes.len()),
            ));
        }
        Ok(Self { bytes, bit_len })
    }

    pub fn bit_len(&self) -> usize {
        self.bit_len
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Drops bits from the end.
    pub fn truncated(&self, bit_len: usize) -> Self {
        let bit_len = bit_len.min(self.bit_len);
        let mut w = BitWriter::default();
        let mut r = BitReader::new(self);
        for _ in 0..bit_len {
            w.push(r.read(1, "bitstream").expect("within length"), 1);
        }
        w.finish()
    }

    /// Appends `bits` zero bits.
    pub fn padded(&self, bits: usize) -> Self {
        let mut w = BitWriter::default();
        let mut r = BitReader::new(self);
        for _ in 0..self.bit_len {
            w.push(r.read(1, "bitstream").expect("within length"), 1);
        }
        for _ in 0..bits {
            w.push(0, 1);
        }
        w.finish()
    }
}

#[derive(Default)]
pub(crate) struct BitWriter {
    bytes: Vec<u8>,
    bit_len: usize,
}

impl BitWriter {
    /// Writes the low `width` bits of `value`, most significant first.
    pub(crate) fn push(&mut self, value: u64, width: u32) {
        debug_assert!(width <= 64);
        debug_assert!(width == 64 || value >> width == 0);
        for b in (0..width).rev() {
            let bit = (value >> b) & 1;
            if self.bit_len.is_multiple_of(8) {
                self.bytes.push(0);
            }
            if bit == 1 {
                let last = self.bytes.len() - 1;
                self.bytes[last] |= 0x80 >> (self.bit_len % 8);
            }
            self.bit_len += 1;
        }
    }

    pub(crate) fn finish(self) -> Bitstream {
        Bitstream {
            bytes: self.bytes,
            bit_len: self.bit_len,
        }
    }
}

pub(crate) struct BitReader<'a> {
    stream: &'a Bitstream,
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub(crate) fn new(stream: &'a Bitstream) -> Self {
        Self { stream, pos: 0 }
    }

    pub(crate) fn read(&mut self, width: u32, field: &'static str) -> Result<u64> {
        let width = width as usize;
        if self.pos + width > self.stream.bit_len {
            return Err(Error::format(
                field,
                format!(
                    "stream truncated: need {width} bits at offset {}, only {} available",
                    self.pos,
                    self.stream.bit_len - self.pos
                ),
            ));
        }
        let mut v = 0u64;
        for _ in 0..width {
            let byte = self.stream.bytes[self.pos / 8];
            let bit = (byte >> (7 - self.pos % 8)) & 1;
            v = (v << 1) | u64::from(bit);
            self.pos += 1;
        }
        Ok(v)
    }

    pub(crate) fn remaining(&self) -> usize {
        self.stream.bit_len - self.pos
    }
}

/// `ceil(log2(x))` for `x >= 1`; 0 for `x <= 1`.
pub fn ceil_log2(x: usize) -> u32 {
    if x <= 1 {
        0
    } else {
        usize::BITS - (x - 1).leading_zeros()
    }
}

/// Width of the count field for dimension `n`.
pub fn count_width(n: usize) -> u32 {
    ceil_log2(n + 1)
}

/// Width of each index-gap field for dimension `n`.
pub fn index_width(n: usize) -> u32 {
    ceil_log2(n)
}

/// Exact encoded length of a message with `entries` entries.
pub fn encoded_bits(n: usize, entries: usize) -> usize {
    count_width(n) as usize + entries * (index_width(n) as usize + 1)
}

pub fn encode_sparse_sign(v: &SparseSignVector) -> Bitstream {
    let n = v.dim();
    let iw = index_width(n);
    let mut w = BitWriter::default();
    w.push(v.len() as u64, count_width(n));
    let mut prev = 0usize;
    for (pos, &(i, s)) in v.entries().iter().enumerate() {
        let gap = if pos == 0 { i } else { i - prev };
        w.push(gap as u64, iw);
        w.push(u64::from(s == Sign::Pos), 1);
        prev = i;
    }
    w.finish()
}

pub fn decode_sparse_sign(b: &Bitstream, n: usize) -> Result<SparseSignVector> {
    let iw = index_width(n);
    let mut r = BitReader::new(b);
    let count = r.read(count_width(n), "count")? as usize;
    if count > n {
        return Err(Error::format("count", format!("{count} entries exceed dimension {n}")));
    }
    let mut entries = Vec::with_capacity(count);
    let mut prev = 0usize;
    for pos in 0..count {
        let gap = r.read(iw, "index")? as usize;
        let sign = if r.read(1, "sign")? == 1 { Sign::Pos } else { Sign::Neg };
        if pos > 0 && gap == 0 {
            return Err(Error::format(
                "index",
                format!("entry {pos} repeats index {prev} (indices must increase)"),
            ));
        }
        let index = if pos == 0 { gap } else { prev + gap };
        if index >= n {
            return Err(Error::format(
                "index",
                format!("entry {pos} has index {index} >= dimension {n}"),
            ));
        }
        entries.push((index, sign));
        prev = index;
    }
    if r.remaining() != 0 {
        return Err(Error::format(
            "bitstream",
            format!("{} trailing bits after {count} entries", r.remaining()),
        ));
    }
    SparseSignVector::new(n, entries)
}
