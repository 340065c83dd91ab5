//! Indexed key material and bit-sequence helpers.

use bitvec::prelude::*;

use crate::error::{Error, Result};

/// Packed bit storage used for every key.
pub type Bits = BitVec<u64, Lsb0>;

/// Pipeline stage a key buffer belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Raw,
    Sifted,
    Corrected,
    Secret,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Raw => "raw",
            Stage::Sifted => "sifted",
            Stage::Corrected => "corrected",
            Stage::Secret => "secret",
        }
    }
}

/// A bit sequence tagged with its stage and a running count of bits disclosed about it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyBuffer {
    stage: Stage,
    bits: Bits,
    /// Clock tick of each bit; populated for sifted keys only.
    indices: Vec<u64>,
    leaked_bits: u64,
}

impl KeyBuffer {
    pub fn new(stage: Stage, bits: Bits) -> Self {
        KeyBuffer {
            stage,
            bits,
            indices: Vec::new(),
            leaked_bits: 0,
        }
    }

    /// Builds a sifted key; `indices` must be strictly increasing and match `bits` in length.
    pub fn sifted(bits: Bits, indices: Vec<u64>) -> Result<Self> {
        if bits.len() != indices.len() {
            return Err(Error::LengthMismatch {
                left: bits.len(),
                right: indices.len(),
            });
        }
        check_strictly_increasing(&indices)?;
        Ok(KeyBuffer {
            stage: Stage::Sifted,
            bits,
            indices,
            leaked_bits: 0,
        })
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn bits(&self) -> &BitSlice<u64, Lsb0> {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut Bits {
        &mut self.bits
    }

    pub fn indices(&self) -> &[u64] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn leaked_bits(&self) -> u64 {
        self.leaked_bits
    }

    /// Records `n` more disclosed bits. The ledger only grows.
    pub fn add_leak(&mut self, n: u64) {
        self.leaked_bits += n;
    }

    /// Moves the buffer to a later stage, keeping bits and the leak ledger.
    /// Tick indices survive only while the buffer stays sifted.
    pub fn into_stage(mut self, stage: Stage) -> Self {
        if stage != Stage::Sifted {
            self.indices.clear();
        }
        self.stage = stage;
        self
    }

    /// Deletes the bits at `positions` (sorted, strictly increasing, in range).
    pub fn remove_positions(&mut self, positions: &[u64]) -> Result<()> {
        check_strictly_increasing(positions)?;
        if let Some(&last) = positions.last() {
            if last as usize >= self.len() {
                return Err(Error::InvalidIndices {
                    position: positions.len() - 1,
                    reason: format!("{last} out of range for {} bits", self.len()),
                });
            }
        }
        let mut kept = Bits::with_capacity(self.len() - positions.len());
        let mut kept_idx = Vec::new();
        let mut drop = positions.iter().peekable();
        for (i, bit) in self.bits.iter().by_vals().enumerate() {
            if drop.peek().is_some_and(|&&p| p as usize == i) {
                drop.next();
                continue;
            }
            kept.push(bit);
            if !self.indices.is_empty() {
                kept_idx.push(self.indices[i]);
            }
        }
        self.bits = kept;
        self.indices = kept_idx;
        Ok(())
    }
}

/// Hamming distance and bit-error rate between two keys of the same stage and length.
pub fn compare_keys(a: &KeyBuffer, b: &KeyBuffer) -> Result<(usize, f64)> {
    if a.stage != b.stage {
        return Err(Error::StageMismatch {
            left: a.stage,
            right: b.stage,
        });
    }
    let errors = hamming_distance(&a.bits, &b.bits)?;
    let ber = if a.is_empty() {
        0.0
    } else {
        errors as f64 / a.len() as f64
    };
    Ok((errors, ber))
}

pub fn hamming_distance(a: &BitSlice<u64, Lsb0>, b: &BitSlice<u64, Lsb0>) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let mut diff = a.to_bitvec();
    diff ^= b;
    Ok(diff.count_ones())
}

pub(crate) fn check_strictly_increasing(indices: &[u64]) -> Result<()> {
    for (i, w) in indices.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(Error::InvalidIndices {
                position: i + 1,
                reason: format!("{} does not exceed {}", w[1], w[0]),
            });
        }
    }
    Ok(())
}

/// Parses a string of `0`/`1` characters, ignoring whitespace.
pub fn bits_from_str(s: &str) -> Result<Bits> {
    s.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(Error::Codec(format!("not a bit: {other:?}"))),
        })
        .collect()
}

/// Packs bits MSB-first into bytes; the final byte is zero-padded.
pub fn pack_msb_first(bits: &BitSlice<u64, Lsb0>) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for i in bits.iter_ones() {
        out[i / 8] |= 0x80 >> (i % 8);
    }
    out
}

/// Inverse of [`pack_msb_first`]; `bytes` must hold at least `n` bits.
pub fn unpack_msb_first(bytes: &[u8], n: usize) -> Result<Bits> {
    if bytes.len() * 8 < n {
        return Err(Error::Codec(format!(
            "{} bytes cannot hold {n} bits",
            bytes.len()
        )));
    }
    Ok((0..n)
        .map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0)
        .collect())
}
