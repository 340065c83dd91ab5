//! Position syndromes for locating a single error inside a span.
//!
//! The syndrome of a span is the XOR of the 0-based offsets of its set bits.
//! When both parties already know the span disagrees in parity, a single error
//! at offset `j` makes the syndrome difference equal `j`. This is the extended
//! Hamming decoder with the padding to `2^r` bits left implicit as zeros.

use bitvec::prelude::*;

use crate::key::Bits;

/// Bits needed to name any offset in a span of `len` bits.
pub fn syndrome_width(len: usize) -> usize {
    if len <= 1 {
        0
    } else {
        (usize::BITS - (len - 1).leading_zeros()) as usize
    }
}

/// XOR of the offsets of the set bits in `bits`.
pub fn position_syndrome<I: IntoIterator<Item = bool>>(bits: I) -> u64 {
    bits.into_iter()
        .enumerate()
        .filter(|&(_, b)| b)
        .fold(0, |acc, (j, _)| acc ^ j as u64)
}

/// `value` as `width` bits, most significant first.
pub fn to_bits(value: u64, width: usize) -> Bits {
    (0..width).rev().map(|i| (value >> i) & 1 == 1).collect()
}

pub fn from_bits(bits: &BitSlice<u64, Lsb0>) -> u64 {
    bits.iter()
        .by_vals()
        .fold(0, |acc, b| (acc << 1) | u64::from(b))
}
