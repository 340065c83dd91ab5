//! Whole-pipeline drivers for both parties.
//!
//! Message flow (each line is one turn; a turn may carry several messages):
//!
//! ```text
//! Alice -> Bob   Hello
//! Bob -> Alice   Hello (echo), SiftIndices
//! Alice -> Bob   Done(Sift)
//! Bob -> Alice   SampleRequest                 | Done(NoYield) if nothing was sifted
//! Alice -> Bob   SampleReveal
//! Bob -> Alice   ShuffleSeed, BlockParity      | Done(NoYield)
//!   ... parity and syndrome queries, Done(Pass), repeated per pass ...
//! Bob -> Alice   VerifyHash
//! Alice -> Bob   VerifyHash
//! Bob -> Alice   PaSeed
//! Alice -> Bob   Done(Final)
//! ```
//!
//! Bob hosts the simulated quantum channel: he regenerates Alice's pulse train
//! from the seed in Hello and never looks at her bit values outside the
//! simulation-truth statistics of his report.

use std::thread;

use rand::{Rng, RngCore};

use crate::channel::{run_channel, Cause, Outcome};
use crate::error::{Error, Result};
use crate::key::{KeyBuffer, Stage};
use crate::pa::{compress, plan_output_length, secret_yield_per_sifted_bit, PaPlan};
use crate::params::ProtocolParams;
use crate::protocol::{alice_generate, bob_receive, sift};
use crate::recon::{
    alice_estimate, alice_reconcile, bob_estimate, bob_reconcile, choose_sample, ReconConfig,
};
use crate::report::{Role, SessionReport, Truth};
use crate::rng::seeded_rng;
use crate::wire::{loopback_pair, Body, Endpoint, Hello, Phase, Record, PROTOCOL_VERSION};

/// Everything both parties must agree on before the first pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionConfig {
    pub params: ProtocolParams,
    pub pulses: u64,
    /// Contiguous pulse blocks, each with its own system-efficiency draw.
    pub blocks: u64,
    pub recon: ReconConfig,
    /// Reconciliation efficiency assumed when deciding whether a session can
    /// yield any secret bits at all.
    pub recon_efficiency: f64,
}

impl SessionConfig {
    pub fn new(params: ProtocolParams, pulses: u64) -> Self {
        SessionConfig {
            params,
            pulses,
            blocks: default_blocks(pulses),
            recon: ReconConfig::default(),
            recon_efficiency: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.recon.validate()?;
        if self.pulses == 0 {
            return Err(Error::param("pulses", "must be at least 1"));
        }
        if self.blocks == 0 || self.blocks > self.pulses {
            return Err(Error::param("blocks", "must lie in 1..=pulses"));
        }
        if !(self.recon_efficiency >= 1.0 && self.recon_efficiency.is_finite()) {
            return Err(Error::param("recon_efficiency", "must be at least 1"));
        }
        Ok(())
    }

    pub fn session_id(&self) -> u64 {
        seeded_rng(self.params.rng_seed, "session-id").next_u64()
    }

    /// Settings line carried in Hello.
    pub fn settings(&self) -> String {
        format!(
            "{} sample_fraction={} passes={} hash_bits={} leaf_len={} recon_efficiency={}",
            self.params.to_kv_line(),
            self.recon.sample_fraction,
            self.recon.passes,
            self.recon.hash_bits,
            self.recon.leaf_len,
            self.recon_efficiency
        )
    }

    pub fn hello(&self) -> Hello {
        Hello {
            version: PROTOCOL_VERSION,
            seed: self.params.rng_seed,
            pulses: self.pulses,
            blocks: self.blocks,
            settings: self.settings(),
        }
    }

    pub fn from_hello(h: &Hello) -> Result<Self> {
        let bad = |reason: String| Error::protocol("hello", reason);
        let mut cfg = SessionConfig::new(ProtocolParams::default(), h.pulses);
        cfg.blocks = h.blocks;
        for field in h.settings.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed setting `{field}`")))?;
            let num = |v: &str| v.parse::<f64>().map_err(|e| bad(format!("{k}: {e}")));
            let int = |v: &str| v.parse::<u32>().map_err(|e| bad(format!("{k}: {e}")));
            match k {
                "sample_fraction" => cfg.recon.sample_fraction = num(v)?,
                "passes" => cfg.recon.passes = int(v)?,
                "hash_bits" => cfg.recon.hash_bits = int(v)?,
                "leaf_len" => cfg.recon.leaf_len = int(v)? as usize,
                "recon_efficiency" => cfg.recon_efficiency = num(v)?,
                _ => cfg.params.set(k, v).map_err(bad)?,
            }
        }
        if cfg.params.rng_seed != h.seed {
            return Err(bad("seed disagrees with settings".into()));
        }
        cfg.validate().map_err(|e| bad(e.to_string()))?;
        Ok(cfg)
    }
}

/// Pulses per efficiency draw when no block count is given.
pub const DEFAULT_BLOCK_PULSES: u64 = 25_000;

/// One block per [`DEFAULT_BLOCK_PULSES`] pulses, at least one.
pub fn default_blocks(pulses: u64) -> u64 {
    pulses.div_ceil(DEFAULT_BLOCK_PULSES).max(1)
}

/// What one party ends up with.
#[derive(Debug, Clone)]
pub struct PartyOutput {
    pub report: SessionReport,
    pub secret: KeyBuffer,
}

fn unexpected(phase: &'static str, expected: &str, got: &Body) -> Error {
    Error::protocol(
        phase,
        format!("expected {expected}, got {}", got.kind().name()),
    )
}

/// Tells the peer why we are stopping, unless the peer stopped first or the
/// channel itself failed.
fn abort_on_error<T>(ep: &mut Endpoint, r: Result<T>) -> Result<T> {
    if let Err(e) = &r {
        if !matches!(e, Error::Aborted { .. }) && !e.is_transport() {
            let _ = ep.send(Body::Abort(e.to_string()));
        }
    }
    r
}

pub fn run_alice(ep: &mut Endpoint, cfg: &SessionConfig) -> Result<PartyOutput> {
    let r = alice_inner(ep, cfg);
    abort_on_error(ep, r)
}

fn alice_inner(ep: &mut Endpoint, cfg: &SessionConfig) -> Result<PartyOutput> {
    cfg.validate()?;
    let sid = cfg.session_id();
    ep.set_session_id(sid);
    let hello = cfg.hello();
    ep.send(Body::Hello(hello.clone()))?;
    match ep.recv_body("hello")? {
        Body::Hello(echo) if echo == hello => {}
        Body::Hello(_) => return Err(Error::protocol("hello", "echoed Hello differs")),
        other => return Err(unexpected("hello", "Hello", &other)),
    }
    let p = &cfg.params;
    let alice = alice_generate(
        p,
        sid,
        cfg.pulses,
        &mut seeded_rng(p.rng_seed, "alice-bits"),
    )?;
    let indices = match ep.recv_body("sifting")? {
        Body::SiftIndices(i) => i,
        other => return Err(unexpected("sifting", "SiftIndices", &other)),
    };
    let mut key = sift(&alice, &indices)?;
    ep.send(Body::Done(Phase::Sift))?;

    let mut report = SessionReport {
        role: Role::Alice,
        session_id: sid,
        params: *p,
        pulses: cfg.pulses,
        blocks: cfg.blocks,
        sifted_bits: key.len() as u64,
        sample_bits: 0,
        corrected_bits: 0,
        secret_bits: 0,
        estimated_ber: None,
        truth: None,
        disclosed_bits: 0,
        hash_bits: 0,
        passes: 0,
        recon_efficiency: None,
        no_yield: true,
    };
    if matches!(ep.peek()?.body, Body::SampleRequest(_)) {
        report.sample_bits = alice_estimate(ep, &mut key)? as u64;
    }
    if matches!(ep.peek()?.body, Body::Done(Phase::NoYield)) {
        ep.recv()?;
        ep.send(Body::Done(Phase::Final))?;
        return Ok(PartyOutput {
            report,
            secret: KeyBuffer::new(Stage::Secret, Default::default()),
        });
    }
    let recon = alice_reconcile(ep, key, &cfg.recon)?;
    report.corrected_bits = recon.corrected_key.len() as u64;
    report.disclosed_bits = recon.disclosed_bits;
    report.hash_bits = recon.hash_bits;
    report.passes = recon.passes;
    let (seed, output_len) = match ep.recv_body("amplification")? {
        Body::PaSeed { seed, output_len } => (seed, output_len),
        other => return Err(unexpected("amplification", "PaSeed", &other)),
    };
    let plan = PaPlan::new(recon.corrected_key.len(), output_len as usize, seed)?;
    let secret = compress(&recon.corrected_key, &plan)?;
    ep.send(Body::Done(Phase::Final))?;
    report.secret_bits = secret.len() as u64;
    report.no_yield = secret.is_empty();
    report.check_invariants()?;
    Ok(PartyOutput { report, secret })
}

/// Bob's side. The session parameters come from Alice's Hello.
pub fn run_bob(ep: &mut Endpoint) -> Result<PartyOutput> {
    let r = bob_inner(ep);
    abort_on_error(ep, r)
}

fn bob_inner(ep: &mut Endpoint) -> Result<PartyOutput> {
    let hello = match ep.recv_body("hello")? {
        Body::Hello(h) => h,
        other => return Err(unexpected("hello", "Hello", &other)),
    };
    if hello.version != PROTOCOL_VERSION {
        return Err(Error::protocol(
            "hello",
            format!(
                "unsupported protocol version {}, expected {PROTOCOL_VERSION}",
                hello.version
            ),
        ));
    }
    let cfg = SessionConfig::from_hello(&hello)?;
    let sid = ep.session_id().unwrap_or_default();
    if sid != cfg.session_id() {
        return Err(Error::protocol(
            "hello",
            "session id does not follow from the seed",
        ));
    }
    ep.send(Body::Hello(hello))?;

    let p = cfg.params;
    let seed = p.rng_seed;
    let pulses = alice_generate(&p, sid, cfg.pulses, &mut seeded_rng(seed, "alice-bits"))?.pulses;
    let run = run_channel(&p, &pulses, cfg.blocks, seed);
    let dual_fires = run.dual_fires();
    let detections = run.events.len() as u64;
    let eta_system_mean =
        run.blocks.iter().map(|b| b.eta_system).sum::<f64>() / run.blocks.len() as f64;
    let mut errors_by_cause = [0u64; 4];
    for ev in &run.events {
        if let (Some(bit), Some(cause)) = (ev.outcome.bit(), ev.cause) {
            if bit != pulses[ev.tick as usize].alice_bit {
                errors_by_cause[Cause::ALL.iter().position(|&c| c == cause).unwrap()] += 1;
            }
        }
    }
    drop(pulses);
    let bob = bob_receive(sid, run.events)?;
    debug_assert!(bob.events.iter().all(|e| e.outcome != Outcome::None));
    let mut key = bob.sifted_key;
    ep.send(Body::SiftIndices(key.indices().to_vec()))?;
    match ep.recv_body("sifting")? {
        Body::Done(Phase::Sift) => {}
        other => return Err(unexpected("sifting", "Done(Sift)", &other)),
    }

    let mut report = SessionReport {
        role: Role::Bob,
        session_id: sid,
        params: p,
        pulses: cfg.pulses,
        blocks: cfg.blocks,
        sifted_bits: key.len() as u64,
        sample_bits: 0,
        corrected_bits: 0,
        secret_bits: 0,
        estimated_ber: None,
        truth: Some(Truth {
            errors: errors_by_cause.iter().sum(),
            errors_by_cause,
            detections,
            dual_fires,
            eta_system_mean,
        }),
        disclosed_bits: 0,
        hash_bits: 0,
        passes: 0,
        recon_efficiency: None,
        no_yield: true,
    };
    let mut rng = seeded_rng(seed, "bob-public");
    let mut eps = None;
    if !key.is_empty() {
        let positions = choose_sample(key.len(), &cfg.recon, &mut rng)?;
        report.sample_bits = positions.len() as u64;
        eps = Some(bob_estimate(ep, &mut key, &positions)?);
        report.estimated_ber = eps;
    }
    let nbar = p.mean_photon_number;
    let viable = eps.is_some_and(|e| {
        !key.is_empty() && secret_yield_per_sifted_bit(nbar, e, cfg.recon_efficiency) > 0.0
    });
    if !viable {
        ep.send(Body::Done(Phase::NoYield))?;
        match ep.recv_body("amplification")? {
            Body::Done(Phase::Final) => {}
            other => return Err(unexpected("amplification", "Done(Final)", &other)),
        }
        return Ok(PartyOutput {
            report,
            secret: KeyBuffer::new(Stage::Secret, Default::default()),
        });
    }
    let eps = eps.unwrap();
    let recon = bob_reconcile(ep, key, eps, &cfg.recon, &mut rng)?;
    let corrected = &recon.corrected_key;
    // The reconciliation term uses what was actually disclosed rather than c*f(eps).
    let extra = recon.disclosed_bits + recon.hash_bits + report.sample_bits;
    let output_len = plan_output_length(corrected.len(), nbar, eps, 0.0, extra);
    let pa_seed: u64 = rng.random();
    ep.send(Body::PaSeed {
        seed: pa_seed,
        output_len: output_len as u64,
    })?;
    let secret = compress(
        corrected,
        &PaPlan::new(corrected.len(), output_len, pa_seed)?,
    )?;
    match ep.recv_body("amplification")? {
        Body::Done(Phase::Final) => {}
        other => return Err(unexpected("amplification", "Done(Final)", &other)),
    }
    report.corrected_bits = corrected.len() as u64;
    report.disclosed_bits = recon.disclosed_bits;
    report.hash_bits = recon.hash_bits;
    report.passes = recon.passes;
    report.recon_efficiency = recon.efficiency;
    report.secret_bits = secret.len() as u64;
    report.no_yield = secret.is_empty();
    report.check_invariants()?;
    Ok(PartyOutput { report, secret })
}

/// Both parties in one process over an in-memory channel.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub alice: PartyOutput,
    pub bob: PartyOutput,
    /// Bob's view of the public channel.
    pub transcript: Vec<Record>,
}

pub fn simulate(cfg: &SessionConfig) -> Result<Simulation> {
    cfg.validate()?;
    let (mut a_ep, mut b_ep) = loopback_pair();
    let a_cfg = *cfg;
    let alice = thread::spawn(move || run_alice(&mut a_ep, &a_cfg));
    let bob = run_bob(&mut b_ep);
    let transcript = b_ep.transcript().to_vec();
    drop(b_ep);
    let alice = alice.join().expect("alice thread panicked");
    let (alice, bob) = match (alice, bob) {
        (Ok(a), Ok(b)) => (a, b),
        // Prefer the side that detected the problem over the one told to stop.
        (Err(e), Ok(_)) | (Ok(_), Err(e)) => return Err(e),
        (Err(a), Err(b)) => {
            return Err(if matches!(b, Error::Aborted { .. }) {
                a
            } else {
                b
            })
        }
    };
    if alice.secret.bits() != bob.secret.bits() {
        return Err(Error::protocol("amplification", "secret keys differ"));
    }
    Ok(Simulation {
        alice,
        bob,
        transcript,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64, nbar: f64) -> SessionConfig {
        SessionConfig::new(
            ProtocolParams {
                rng_seed: seed,
                mean_photon_number: nbar,
                ..Default::default()
            },
            200_000,
        )
    }

    #[test]
    fn settings_round_trip_through_hello() {
        let mut cfg = small(5, 0.4);
        cfg.recon.passes = 6;
        cfg.recon_efficiency = 1.16;
        assert_eq!(SessionConfig::from_hello(&cfg.hello()).unwrap(), cfg);
    }

    #[test]
    fn end_to_end_keys_match() {
        let sim = simulate(&small(7, 0.35)).unwrap();
        let (a, b) = (&sim.alice.report, &sim.bob.report);
        assert!(b.secret_bits > 0, "{}", b.to_text());
        assert_eq!(sim.alice.secret, sim.bob.secret);
        assert_eq!(a.sifted_bits, b.sifted_bits);
        assert_eq!(a.corrected_bits, b.corrected_bits);
        assert_eq!(a.disclosed_bits, b.disclosed_bits);
        assert_eq!(a.session_id, b.session_id);
        b.check_invariants().unwrap();
    }

    #[test]
    fn low_nbar_gives_no_yield() {
        let sim = simulate(&small(7, 0.02)).unwrap();
        assert!(sim.bob.report.no_yield && sim.alice.report.no_yield);
        assert_eq!(sim.bob.report.secret_bits, 0);
        assert_eq!(sim.bob.report.corrected_bits, 0);
    }

    #[test]
    fn deterministic_transcript() {
        let a = simulate(&small(3, 0.35)).unwrap();
        let b = simulate(&small(3, 0.35)).unwrap();
        assert_eq!(a.transcript, b.transcript);
        assert_eq!(a.bob.report, b.bob.report);
    }
}
