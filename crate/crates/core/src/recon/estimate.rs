//! Error-rate estimation by sacrificing a random sample of sifted bits.
//!
//! Bob names the positions, Alice reveals her bits there, Bob counts the
//! disagreements. Both sides delete the sample and book it as disclosed.

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::key::{check_strictly_increasing, Bits, KeyBuffer};
use crate::recon::ReconConfig;
use crate::wire::{Body, Endpoint};

const PHASE: &str = "estimation";

/// Sorted sample of `round(sample_fraction * n)` positions, at least one.
pub fn choose_sample<R: Rng + ?Sized>(
    n: usize,
    cfg: &ReconConfig,
    rng: &mut R,
) -> Result<Vec<u64>> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let m = ((n as f64 * cfg.sample_fraction).round() as usize).clamp(1, n);
    let mut picked: Vec<u64> = index::sample(rng, n, m)
        .into_iter()
        .map(|i| i as u64)
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Bob's side. Returns the disagreement fraction over `positions`.
pub fn bob_estimate(ep: &mut Endpoint, key: &mut KeyBuffer, positions: &[u64]) -> Result<f64> {
    if positions.is_empty() {
        return Err(Error::EmptySample);
    }
    ep.send(Body::SampleRequest(positions.to_vec()))?;
    let revealed = match ep.recv_body(PHASE)? {
        Body::SampleReveal(bits) => bits,
        other => {
            return Err(Error::protocol(
                PHASE,
                format!("expected SampleReveal, got {}", other.kind().name()),
            ))
        }
    };
    if revealed.len() != positions.len() {
        return Err(Error::protocol(
            PHASE,
            format!(
                "{} bits revealed for {} positions",
                revealed.len(),
                positions.len()
            ),
        ));
    }
    let errors = positions
        .iter()
        .zip(revealed.iter().by_vals())
        .filter(|&(&p, a)| key.bits()[p as usize] != a)
        .count();
    key.remove_positions(positions)?;
    key.add_leak(positions.len() as u64);
    Ok(errors as f64 / positions.len() as f64)
}

/// Alice's side. Returns the number of bits revealed.
pub fn alice_estimate(ep: &mut Endpoint, key: &mut KeyBuffer) -> Result<usize> {
    let positions = match ep.recv_body(PHASE)? {
        Body::SampleRequest(p) => p,
        other => {
            return Err(Error::protocol(
                PHASE,
                format!("expected SampleRequest, got {}", other.kind().name()),
            ))
        }
    };
    if positions.is_empty() {
        return Err(Error::EmptySample);
    }
    check_strictly_increasing(&positions)?;
    if positions.last().is_some_and(|&p| p as usize >= key.len()) {
        return Err(Error::protocol(PHASE, "sample position beyond key length"));
    }
    let bits: Bits = positions.iter().map(|&p| key.bits()[p as usize]).collect();
    ep.send(Body::SampleReveal(bits))?;
    key.remove_positions(&positions)?;
    key.add_leak(positions.len() as u64);
    Ok(positions.len())
}
