//! Error estimation and interactive error correction.

pub mod engine;
pub mod estimate;
pub mod hamming;
pub mod hash;

use std::thread;

pub use engine::{alice_reconcile, bob_reconcile};
pub use estimate::{alice_estimate, bob_estimate, choose_sample};

use crate::error::{Error, Result};
use crate::key::KeyBuffer;
use crate::rng::seeded_rng;
use crate::wire::{loopback_pair, Message};

pub const MIN_BLOCK: usize = 8;
pub const MAX_BLOCK: usize = 4096;

/// Binary entropy: the Shannon-limit disclosure per key bit at error rate `eps`.
pub fn shannon_leak_per_bit(eps: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::param("epsilon", format!("{eps} outside [0, 1]")));
    }
    let h = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    Ok(h(eps) + h(1.0 - eps))
}

/// First-pass block length: the power of two nearest `0.73 / eps` within
/// [`MIN_BLOCK`, `MAX_BLOCK`].
pub fn initial_block_len(eps: f64) -> usize {
    let target = if eps > 0.0 { 0.73 / eps } else { f64::INFINITY };
    let target = target.clamp(MIN_BLOCK as f64, MAX_BLOCK as f64);
    1usize << target.log2().round() as u32
}

/// Later passes double the block, up to [`MAX_BLOCK`] or half the key.
pub fn next_block_len(prev: usize, n: usize) -> usize {
    (2 * prev).min(MAX_BLOCK.min((n / 2).max(MIN_BLOCK)).max(prev))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconConfig {
    /// Fraction of sifted bits sacrificed to estimate the error rate.
    pub sample_fraction: f64,
    /// Passes run when the estimate is nonzero. A zero estimate runs one.
    pub passes: u32,
    pub hash_bits: u32,
    /// Spans at most this long are resolved by syndrome instead of halving.
    pub leaf_len: usize,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            sample_fraction: 0.1,
            passes: 4,
            hash_bits: 128,
            leaf_len: 4,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_fraction > 0.0 && self.sample_fraction < 0.5) {
            return Err(Error::param("sample_fraction", "must lie in (0, 0.5)"));
        }
        if self.passes < 2 {
            return Err(Error::param("passes", "at least 2"));
        }
        if !(1..=128).contains(&self.hash_bits) {
            return Err(Error::param("hash_bits", "must lie in 1..=128"));
        }
        if self.leaf_len == 0 {
            return Err(Error::param("leaf_len", "must be positive"));
        }
        Ok(())
    }
}

/// Result of reconciliation on one side.
#[derive(Debug, Clone)]
pub struct ReconOutcome {
    /// Stage `Corrected`; its ledger includes everything disclosed so far.
    pub corrected_key: KeyBuffer,
    /// Known to Bob only.
    pub estimated_ber: Option<f64>,
    /// Parity and syndrome bits sent by Bob.
    pub disclosed_bits: u64,
    /// Verification hash disclosure, `hash_bits` per comparison.
    pub hash_bits: u64,
    pub passes: u32,
    /// `disclosed_bits / (f(eps) * n)`; absent when `f(eps)` is zero or unknown.
    pub efficiency: Option<f64>,
    pub verified: bool,
}

/// Both sides of a reconciliation run over an in-memory channel.
#[derive(Debug, Clone)]
pub struct PairOutcome {
    pub alice: ReconOutcome,
    pub bob: ReconOutcome,
    /// Bob's view of the exchange.
    pub transcript: Vec<Message>,
}

/// Runs Alice on a helper thread and Bob on the caller's, Bob's choices drawn
/// from `seed`.
pub fn reconcile_pair(
    alice_key: KeyBuffer,
    bob_key: KeyBuffer,
    estimated_ber: f64,
    cfg: &ReconConfig,
    seed: u64,
) -> Result<PairOutcome> {
    if alice_key.len() != bob_key.len() {
        return Err(Error::LengthMismatch {
            left: alice_key.len(),
            right: bob_key.len(),
        });
    }
    let (mut a_ep, mut b_ep) = loopback_pair();
    let a_cfg = *cfg;
    let alice = thread::spawn(move || alice_reconcile(&mut a_ep, alice_key, &a_cfg));
    let mut rng = seeded_rng(seed, "bob-recon");
    let bob = bob_reconcile(&mut b_ep, bob_key, estimated_ber, cfg, &mut rng);
    let transcript = b_ep.messages().cloned().collect();
    drop(b_ep);
    let alice = alice.join().expect("alice thread panicked");
    let bob = bob?;
    Ok(PairOutcome {
        alice: alice?,
        bob,
        transcript,
    })
}

/// Estimation over an in-memory channel with explicit sample positions.
/// Returns Bob's estimate and Bob's transcript.
pub fn estimate_pair(
    alice_key: &mut KeyBuffer,
    bob_key: &mut KeyBuffer,
    positions: &[u64],
) -> Result<(f64, Vec<Message>)> {
    let (mut a_ep, mut b_ep) = loopback_pair();
    let mut a = alice_key.clone();
    let alice = thread::spawn(move || alice_estimate(&mut a_ep, &mut a).map(|_| a));
    let ber = bob_estimate(&mut b_ep, bob_key, positions);
    let transcript = b_ep.messages().cloned().collect();
    drop(b_ep);
    let a = alice.join().expect("alice thread panicked");
    let ber = ber?;
    *alice_key = a?;
    Ok((ber, transcript))
}
