//! Privacy amplification by random-subset parities, and secret-key files.

use std::fs;
use std::path::Path;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::key::{pack_msb_first, unpack_msb_first, Bits, KeyBuffer, Stage};
use crate::recon::shannon_leak_per_bit;
use crate::rng::seeded_rng;

/// Fraction of the corrected key that survives compression:
/// `(1 - nbar) - 2*sqrt(2)*eps`. May be negative.
pub fn pa_fraction(nbar: f64, eps: f64) -> f64 {
    (1.0 - nbar) - 2.0 * std::f64::consts::SQRT_2 * eps
}

/// Secret bits per sifted bit, `max(0, F - c*f(eps))`, with `c` the
/// reconciliation efficiency relative to the Shannon limit.
pub fn secret_yield_per_sifted_bit(nbar: f64, eps: f64, c: f64) -> f64 {
    let f = shannon_leak_per_bit(eps.clamp(0.0, 1.0)).unwrap_or(1.0);
    (pa_fraction(nbar, eps) - c * f).max(0.0)
}

/// `floor(input_length * yield - extra_leak_bits)`, never below zero.
pub fn plan_output_length(
    input_length: usize,
    nbar: f64,
    eps: f64,
    c: f64,
    extra_leak_bits: u64,
) -> usize {
    let bits =
        input_length as f64 * secret_yield_per_sifted_bit(nbar, eps, c) - extra_leak_bits as f64;
    if bits <= 0.0 {
        0
    } else {
        (bits.floor() as usize).min(input_length)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PaPlan {
    pub input_length: usize,
    pub output_length: usize,
    pub seed: u64,
}

impl PaPlan {
    pub fn new(input_length: usize, output_length: usize, seed: u64) -> Result<Self> {
        if output_length > input_length {
            return Err(Error::param(
                "output_length",
                format!("{output_length} exceeds input length {input_length}"),
            ));
        }
        Ok(PaPlan {
            input_length,
            output_length,
            seed,
        })
    }
}

/// Membership words of subset `i`: bit `j % 64` of word `j / 64` says whether
/// key position `j` takes part.
pub fn subset_row(seed: u64, i: usize, words: usize) -> Vec<u64> {
    let mut rng = seeded_rng(seed, &format!("pa-row-{i}"));
    (0..words).map(|_| rng.next_u64()).collect()
}

/// Output bit `i` is the parity of the key over subset `i`.
pub fn compress(key: &KeyBuffer, plan: &PaPlan) -> Result<KeyBuffer> {
    if key.len() != plan.input_length {
        return Err(Error::LengthMismatch {
            left: key.len(),
            right: plan.input_length,
        });
    }
    let mut words: Vec<u64> = key.bits().to_bitvec().into_vec();
    words.truncate(key.len().div_ceil(64));
    if !key.len().is_multiple_of(64) {
        if let Some(last) = words.last_mut() {
            *last &= (1u64 << (key.len() % 64)) - 1;
        }
    }
    let out: Bits = (0..plan.output_length)
        .map(|i| {
            let row = subset_row(plan.seed, i, words.len());
            let ones: u32 = words
                .iter()
                .zip(&row)
                .map(|(k, r)| (k & r).count_ones())
                .sum();
            ones % 2 == 1
        })
        .collect();
    Ok(KeyBuffer::new(Stage::Secret, out))
}

const MAGIC: &[u8; 8] = b"FSQKDSEC";

/// Key file bytes: magic, big-endian bit count, bits packed MSB-first, then
/// the session id as 32 lowercase hex digits and a newline.
pub fn encode_key_file(bits: &Bits, session_id: u64) -> Result<Vec<u8>> {
    let n = u32::try_from(bits.len()).map_err(|_| Error::param("key", "longer than 2^32 bits"))?;
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&n.to_be_bytes());
    out.extend_from_slice(&pack_msb_first(bits));
    out.extend_from_slice(format!("{session_id:032x}\n").as_bytes());
    Ok(out)
}

pub fn decode_key_file(bytes: &[u8]) -> Result<(Bits, u64)> {
    let bad = |why: &str| Error::Codec(format!("key file: {why}"));
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(bad("missing FSQKDSEC header"));
    }
    let n = u32::from_be_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    let packed = n.div_ceil(8);
    if body.len() != packed + 33 {
        return Err(bad("unexpected length"));
    }
    let bits = unpack_msb_first(&body[..packed], n)?;
    let line = std::str::from_utf8(&body[packed..]).map_err(|_| bad("session id is not text"))?;
    let hex = line
        .strip_suffix('\n')
        .ok_or_else(|| bad("missing newline"))?;
    let sid = u128::from_str_radix(hex, 16).map_err(|_| bad("session id is not hex"))?;
    let sid = u64::try_from(sid).map_err(|_| bad("session id wider than 64 bits"))?;
    Ok((bits, sid))
}

pub fn write_key_file(path: &Path, bits: &Bits, session_id: u64) -> Result<()> {
    fs::write(path, encode_key_file(bits, session_id)?)?;
    Ok(())
}

pub fn read_key_file(path: &Path) -> Result<(Bits, u64)> {
    decode_key_file(&fs::read(path)?)
}
