//! Shuffle-and-correct passes with parity bisection and leaf syndromes.
//!
//! Bob leads and never changes his key. Each pass he announces a shuffle seed
//! and block length followed by the parity of every block. Alice then works
//! through her mismatched blocks in batched rounds: spans longer than the leaf
//! size are halved by asking Bob for first-half parities, leaf spans are
//! resolved from Bob's position syndrome. Every flip re-examines the block
//! holding that bit in all earlier passes, so errors that were hidden in pairs
//! get picked up again. A polynomial hash then confirms agreement.

use std::collections::HashSet;

use bitvec::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::key::{Bits, KeyBuffer, Stage};
use crate::recon::hamming::{from_bits, position_syndrome, syndrome_width, to_bits};
use crate::recon::hash::verify_hash;
use crate::recon::{
    initial_block_len, next_block_len, shannon_leak_per_bit, ReconConfig, ReconOutcome,
};
use crate::rng::seeded_rng;
use crate::wire::{Body, Endpoint, ParityMsg, Phase, Span, SyndromeMsg};

const PHASE: &str = "reconciliation";

/// Block structure of one pass: a seeded permutation cut into equal blocks.
struct Layout {
    perm: Vec<u32>,
    inv: Vec<u32>,
    block_len: usize,
}

impl Layout {
    fn new(n: usize, seed: u64, block_len: usize) -> Self {
        let mut perm: Vec<u32> = (0..n as u32).collect();
        perm.shuffle(&mut seeded_rng(seed, "recon-shuffle"));
        let mut inv = vec![0u32; n];
        for (i, &p) in perm.iter().enumerate() {
            inv[p as usize] = i as u32;
        }
        Layout {
            perm,
            inv,
            block_len,
        }
    }

    fn blocks(&self) -> usize {
        self.perm.len().div_ceil(self.block_len)
    }

    fn block_size(&self, block: usize) -> usize {
        self.block_len.min(self.perm.len() - block * self.block_len)
    }

    fn block_of(&self, pos: usize) -> usize {
        self.inv[pos] as usize / self.block_len
    }

    fn positions(&self, block: usize, start: usize, len: usize) -> &[u32] {
        let at = block * self.block_len + start;
        &self.perm[at..at + len]
    }

    fn span_positions(&self, s: &Span) -> Result<&[u32]> {
        let block = s.block as usize;
        if block >= self.blocks() {
            return Err(Error::protocol(
                PHASE,
                format!("block {block} out of range"),
            ));
        }
        let (start, len) = (s.start as usize, s.len as usize);
        if len == 0 || start + len > self.block_size(block) {
            return Err(Error::protocol(
                PHASE,
                format!("span {start}+{len} outside block {block}"),
            ));
        }
        Ok(self.positions(block, start, len))
    }
}

fn parity(key: &BitSlice<u64, Lsb0>, positions: &[u32]) -> bool {
    positions
        .iter()
        .fold(false, |acc, &p| acc ^ key[p as usize])
}

fn syndrome(key: &BitSlice<u64, Lsb0>, positions: &[u32]) -> u64 {
    position_syndrome(positions.iter().map(|&p| key[p as usize]))
}

fn unexpected(expected: &str, got: &Body) -> Error {
    Error::protocol(
        PHASE,
        format!("expected {expected}, got {}", got.kind().name()),
    )
}

fn check_len(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::param("key", "cannot reconcile an empty key"));
    }
    if n > u32::MAX as usize {
        return Err(Error::param("key", "longer than 2^32 bits"));
    }
    Ok(())
}

fn hash_mask(bits: u32) -> u128 {
    if bits >= 128 {
        u128::MAX
    } else {
        (1u128 << bits) - 1
    }
}

fn finish(
    mut key: KeyBuffer,
    estimated_ber: Option<f64>,
    disclosed_bits: u64,
    hash_bits: u64,
    passes: u32,
) -> ReconOutcome {
    key.add_leak(disclosed_bits + hash_bits);
    let n = key.len() as f64;
    let efficiency = estimated_ber
        .and_then(|e| shannon_leak_per_bit(e).ok())
        .filter(|&f| f > 0.0)
        .map(|f| disclosed_bits as f64 / (f * n));
    ReconOutcome {
        corrected_key: key.into_stage(Stage::Corrected),
        estimated_ber,
        disclosed_bits,
        hash_bits,
        passes,
        efficiency,
        verified: true,
    }
}

/// Bob's engine: answers Alice's questions about his key, which stays fixed.
pub fn bob_reconcile<R: Rng + ?Sized>(
    ep: &mut Endpoint,
    key: KeyBuffer,
    estimated_ber: f64,
    cfg: &ReconConfig,
    rng: &mut R,
) -> Result<ReconOutcome> {
    cfg.validate()?;
    check_len(key.len())?;
    if !(0.0..=1.0).contains(&estimated_ber) {
        return Err(Error::param(
            "estimated_ber",
            format!("{estimated_ber} outside [0, 1]"),
        ));
    }
    let n = key.len();
    let mut bob = Bob {
        ep,
        key: key.bits(),
        layouts: Vec::new(),
        disclosed: 0,
        next_len: initial_block_len(estimated_ber),
    };
    let first = if estimated_ber == 0.0 { 1 } else { cfg.passes };
    let mut hash_bits = 0;
    for attempt in 0..2 {
        let passes = if attempt == 0 { first } else { 1 };
        for _ in 0..passes {
            bob.pass(rng, n)?;
        }
        let key_seed: u64 = rng.random();
        let mine = verify_hash(key_seed, bob.key) & hash_mask(cfg.hash_bits);
        bob.ep.send(Body::VerifyHash {
            key_seed,
            hash: mine,
        })?;
        hash_bits += u64::from(cfg.hash_bits);
        let theirs = match bob.ep.recv_body(PHASE)? {
            Body::VerifyHash { key_seed: ks, hash } if ks == key_seed => hash,
            other => return Err(unexpected("VerifyHash", &other)),
        };
        if theirs == mine {
            let (disclosed, passes) = (bob.disclosed, bob.layouts.len() as u32);
            return Ok(finish(
                key,
                Some(estimated_ber),
                disclosed,
                hash_bits,
                passes,
            ));
        }
    }
    let reason = "verification hash mismatch after extra pass".to_string();
    // Best effort: the peer may already be gone.
    let _ = bob.ep.send(Body::Abort(reason.clone()));
    Err(Error::Aborted {
        phase: PHASE,
        reason,
    })
}

struct Bob<'a, 'k> {
    ep: &'a mut Endpoint,
    key: &'k BitSlice<u64, Lsb0>,
    layouts: Vec<Layout>,
    disclosed: u64,
    next_len: usize,
}

impl Bob<'_, '_> {
    fn pass<R: Rng + ?Sized>(&mut self, rng: &mut R, n: usize) -> Result<()> {
        let pass = self.layouts.len() as u32;
        let block_len = self.next_len;
        self.next_len = next_block_len(block_len, n);
        let seed: u64 = rng.random();
        self.ep.send(Body::ShuffleSeed {
            seed,
            pass,
            block_len: block_len as u32,
        })?;
        let layout = Layout::new(n, seed, block_len);
        let parities: Bits = (0..layout.blocks())
            .map(|b| parity(self.key, layout.positions(b, 0, layout.block_size(b))))
            .collect();
        self.disclosed += parities.len() as u64;
        self.ep
            .send(Body::BlockParity(ParityMsg::Answer(parities)))?;
        self.layouts.push(layout);
        loop {
            match self.ep.recv_body(PHASE)? {
                Body::BlockParity(ParityMsg::Query(spans)) => {
                    let answer = spans
                        .iter()
                        .map(|s| Ok(parity(self.key, self.lookup(s)?)))
                        .collect::<Result<Bits>>()?;
                    self.disclosed += answer.len() as u64;
                    self.ep.send(Body::BlockParity(ParityMsg::Answer(answer)))?;
                }
                Body::Syndrome(SyndromeMsg::Query(spans)) => {
                    let answer = spans
                        .iter()
                        .map(|s| {
                            let pos = self.lookup(s)?;
                            Ok(to_bits(syndrome(self.key, pos), syndrome_width(pos.len())))
                        })
                        .collect::<Result<Vec<Bits>>>()?;
                    self.disclosed += answer.iter().map(|s| s.len() as u64).sum::<u64>();
                    self.ep.send(Body::Syndrome(SyndromeMsg::Answer(answer)))?;
                }
                Body::Done(Phase::Pass) => return Ok(()),
                other => return Err(unexpected("a query or Done", &other)),
            }
        }
    }

    fn lookup(&self, s: &Span) -> Result<&[u32]> {
        self.layouts
            .get(s.pass as usize)
            .ok_or_else(|| Error::protocol(PHASE, format!("unknown pass {}", s.pass)))?
            .span_positions(s)
    }
}

/// A span known to hold an odd number of disagreements, as of the moment
/// Bob's parity for it was learned.
#[derive(Debug, Clone, Copy)]
struct Task {
    span: Span,
    bob_parity: bool,
    /// Syndrome decoding failed here; halve down to single bits instead.
    bisect_only: bool,
}

struct Alice<'a> {
    ep: &'a mut Endpoint,
    key: Bits,
    leaf_len: usize,
    layouts: Vec<Layout>,
    block_parities: Vec<Bits>,
    flipped: Bits,
    active: HashSet<(u32, u32)>,
    tasks: Vec<Task>,
    disclosed: u64,
}

/// Alice's engine: corrects her key toward Bob's.
pub fn alice_reconcile(
    ep: &mut Endpoint,
    key: KeyBuffer,
    cfg: &ReconConfig,
) -> Result<ReconOutcome> {
    cfg.validate()?;
    check_len(key.len())?;
    let n = key.len();
    let mut alice = Alice {
        ep,
        key: key.bits().to_bitvec(),
        leaf_len: cfg.leaf_len,
        layouts: Vec::new(),
        block_parities: Vec::new(),
        flipped: bitvec![u64, Lsb0; 0; n],
        active: HashSet::new(),
        tasks: Vec::new(),
        disclosed: 0,
    };
    let mut hash_bits = 0;
    let mut mismatches = 0;
    loop {
        match alice.ep.recv_body(PHASE)? {
            Body::ShuffleSeed {
                seed,
                pass,
                block_len,
            } => {
                if pass as usize != alice.layouts.len() || block_len == 0 {
                    return Err(Error::protocol(
                        PHASE,
                        format!("bad pass header: pass {pass}, block length {block_len}"),
                    ));
                }
                alice.pass(seed, block_len as usize)?;
            }
            Body::VerifyHash { key_seed, hash } => {
                let mine = verify_hash(key_seed, &alice.key) & hash_mask(cfg.hash_bits);
                alice.ep.send(Body::VerifyHash {
                    key_seed,
                    hash: mine,
                })?;
                hash_bits += u64::from(cfg.hash_bits);
                if mine == hash {
                    let passes = alice.layouts.len() as u32;
                    let disclosed = alice.disclosed;
                    let mut corrected = key;
                    *corrected.bits_mut() = alice.key;
                    return Ok(finish(corrected, None, disclosed, hash_bits, passes));
                }
                mismatches += 1;
                if mismatches > 1 {
                    return Err(Error::protocol(
                        PHASE,
                        "hash mismatch but no abort from peer",
                    ));
                }
            }
            other => return Err(unexpected("ShuffleSeed or VerifyHash", &other)),
        }
    }
}

impl Alice<'_> {
    fn pass(&mut self, seed: u64, block_len: usize) -> Result<()> {
        let layout = Layout::new(self.key.len(), seed, block_len);
        let parities = match self.ep.recv_body(PHASE)? {
            Body::BlockParity(ParityMsg::Answer(bits)) if bits.len() == layout.blocks() => bits,
            other => return Err(unexpected("block parities", &other)),
        };
        self.disclosed += parities.len() as u64;
        let pass = self.layouts.len() as u32;
        self.layouts.push(layout);
        self.block_parities.push(parities);
        for block in 0..self.layouts[pass as usize].blocks() {
            self.requeue(pass, block as u32);
        }
        while !self.tasks.is_empty() {
            self.round()?;
        }
        self.ep.send(Body::Done(Phase::Pass))
    }

    fn span_parity(&self, s: &Span) -> bool {
        let l = &self.layouts[s.pass as usize];
        parity(
            &self.key,
            l.positions(s.block as usize, s.start as usize, s.len as usize),
        )
    }

    fn whole_block(&self, pass: u32, block: u32) -> Task {
        let len = self.layouts[pass as usize].block_size(block as usize) as u32;
        Task {
            span: Span {
                pass,
                block,
                start: 0,
                len,
            },
            bob_parity: self.block_parities[pass as usize][block as usize],
            bisect_only: false,
        }
    }

    /// Queues the block if it disagrees in parity and is not already being worked on.
    fn requeue(&mut self, pass: u32, block: u32) {
        if self.active.contains(&(pass, block)) {
            return;
        }
        let task = self.whole_block(pass, block);
        if self.span_parity(&task.span) != task.bob_parity {
            self.active.insert((pass, block));
            self.tasks.push(task);
        }
    }

    fn flip(&mut self, pos: usize) {
        let v = self.key[pos];
        self.key.set(pos, !v);
        self.flipped.set(pos, true);
        for pass in 0..self.layouts.len() {
            let block = self.layouts[pass].block_of(pos);
            self.requeue(pass as u32, block as u32);
        }
    }

    fn retire(&mut self, t: &Task) {
        self.active.remove(&(t.span.pass, t.span.block));
    }

    fn round(&mut self) -> Result<()> {
        // Drop or restart spans that earlier flips have made stale, and settle single bits.
        let mut parity_tasks = Vec::new();
        let mut leaf_tasks = Vec::new();
        for mut t in std::mem::take(&mut self.tasks) {
            if self.span_parity(&t.span) == t.bob_parity {
                let whole = self.whole_block(t.span.pass, t.span.block);
                if self.span_parity(&whole.span) == whole.bob_parity {
                    self.retire(&t);
                    continue;
                }
                t = whole;
            }
            if t.span.len == 1 {
                let l = &self.layouts[t.span.pass as usize];
                let pos = l.positions(t.span.block as usize, t.span.start as usize, 1)[0] as usize;
                self.retire(&t);
                self.flip(pos);
            } else if t.bisect_only || t.span.len as usize > self.leaf_len {
                parity_tasks.push(t);
            } else {
                leaf_tasks.push(t);
            }
        }

        if !parity_tasks.is_empty() {
            let halves: Vec<Span> = parity_tasks
                .iter()
                .map(|t| Span {
                    len: t.span.len / 2,
                    ..t.span
                })
                .collect();
            self.ep
                .send(Body::BlockParity(ParityMsg::Query(halves.clone())))?;
            let answer = match self.ep.recv_body(PHASE)? {
                Body::BlockParity(ParityMsg::Answer(bits)) if bits.len() == halves.len() => bits,
                other => return Err(unexpected("parity answer", &other)),
            };
            self.disclosed += answer.len() as u64;
            for ((t, half), bob_half) in parity_tasks
                .into_iter()
                .zip(halves)
                .zip(answer.iter().by_vals())
            {
                let next = if self.span_parity(&half) != bob_half {
                    Task {
                        span: half,
                        bob_parity: bob_half,
                        ..t
                    }
                } else {
                    Task {
                        span: Span {
                            start: t.span.start + half.len,
                            len: t.span.len - half.len,
                            ..t.span
                        },
                        bob_parity: t.bob_parity ^ bob_half,
                        ..t
                    }
                };
                self.tasks.push(next);
            }
        }

        if !leaf_tasks.is_empty() {
            let spans: Vec<Span> = leaf_tasks.iter().map(|t| t.span).collect();
            self.ep.send(Body::Syndrome(SyndromeMsg::Query(spans)))?;
            let answer = match self.ep.recv_body(PHASE)? {
                Body::Syndrome(SyndromeMsg::Answer(s)) if s.len() == leaf_tasks.len() => s,
                other => return Err(unexpected("syndrome answer", &other)),
            };
            for (t, bob_syn) in leaf_tasks.into_iter().zip(answer) {
                let len = t.span.len as usize;
                if bob_syn.len() != syndrome_width(len) {
                    return Err(Error::protocol(PHASE, "syndrome of wrong width"));
                }
                self.disclosed += bob_syn.len() as u64;
                if self.span_parity(&t.span) == t.bob_parity {
                    // Made stale by a flip earlier in this round.
                    self.tasks.push(t);
                    continue;
                }
                let l = &self.layouts[t.span.pass as usize];
                let pos = l.positions(t.span.block as usize, t.span.start as usize, len);
                let d = (syndrome(&self.key, pos) ^ from_bits(&bob_syn)) as usize;
                if d < len && !self.flipped[pos[d] as usize] {
                    let target = pos[d] as usize;
                    self.retire(&t);
                    self.flip(target);
                } else {
                    self.tasks.push(Task {
                        bisect_only: true,
                        ..t
                    });
                }
            }
        }
        Ok(())
    }
}
