//! B92 state preparation, bit inference and sifting.

use rand::Rng;

use crate::channel::{DetectionEvent, PhotonSource, PulseRecord};
use crate::error::{Error, Result};
use crate::key::{check_strictly_increasing, Bits, KeyBuffer, Stage};
use crate::params::ProtocolParams;

/// Transmitter state: raw key and the full per-tick log.
#[derive(Debug, Clone)]
pub struct AliceSession {
    pub params: ProtocolParams,
    pub session_id: u64,
    pub raw_key: KeyBuffer,
    pub pulses: Vec<PulseRecord>,
}

/// Receiver state: what the detectors reported and the bits inferred from it.
#[derive(Debug, Clone)]
pub struct BobSession {
    pub session_id: u64,
    pub events: Vec<DetectionEvent>,
    pub sifted_key: KeyBuffer,
}

/// Draws `n_pulses` unbiased bits and a Poisson photon number for each dim pulse.
pub fn alice_generate<R: Rng + ?Sized>(
    params: &ProtocolParams,
    session_id: u64,
    n_pulses: u64,
    rng: &mut R,
) -> Result<AliceSession> {
    if n_pulses == 0 {
        return Err(Error::param("n_pulses", "must be at least 1"));
    }
    params.validate()?;
    let source = PhotonSource::new(params.mean_photon_number);
    let mut bits = Bits::with_capacity(n_pulses as usize);
    let mut pulses = Vec::with_capacity(n_pulses as usize);
    for tick in 0..n_pulses {
        let bit = rng.random_bool(0.5);
        bits.push(bit);
        pulses.push(PulseRecord::new(tick, bit, source.draw(rng)));
    }
    Ok(AliceSession {
        params: *params,
        session_id,
        raw_key: KeyBuffer::new(Stage::Raw, bits),
        pulses,
    })
}

/// Keeps one bit per conclusive (`Bit0`/`Bit1`) event, indexed by its tick.
pub fn bob_receive(session_id: u64, events: Vec<DetectionEvent>) -> Result<BobSession> {
    for (i, w) in events.windows(2).enumerate() {
        if w[1].tick <= w[0].tick {
            return Err(Error::UnorderedEvents { position: i + 1 });
        }
    }
    let (bits, indices): (Bits, Vec<u64>) = events
        .iter()
        .filter_map(|e| e.outcome.bit().map(|b| (b, e.tick)))
        .unzip();
    Ok(BobSession {
        session_id,
        sifted_key: KeyBuffer::sifted(bits, indices)?,
        events,
    })
}

impl BobSession {
    /// The only thing Bob announces during sifting.
    pub fn detection_indices(&self) -> &[u64] {
        self.sifted_key.indices()
    }
}

impl AliceSession {
    pub fn n_pulses(&self) -> u64 {
        self.pulses.len() as u64
    }
}

/// Alice keeps her raw bits at the ticks where Bob reported a conclusive detection.
pub fn sift(alice: &AliceSession, detection_indices: &[u64]) -> Result<KeyBuffer> {
    check_strictly_increasing(detection_indices)?;
    let n = alice.raw_key.len() as u64;
    if let Some(pos) = detection_indices.iter().position(|&i| i >= n) {
        return Err(Error::InvalidIndices {
            position: pos,
            reason: format!("tick {} beyond {n} pulses", detection_indices[pos]),
        });
    }
    let raw = alice.raw_key.bits();
    let bits: Bits = detection_indices.iter().map(|&i| raw[i as usize]).collect();
    let mut key = KeyBuffer::sifted(bits, detection_indices.to_vec())?;
    key.add_leak(alice.raw_key.leaked_bits());
    Ok(key)
}
