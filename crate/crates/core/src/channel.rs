//! Monte Carlo model of the free-space link, one coincidence gate per clock tick.
//!
//! Per gate: every photon of the dim pulse survives with the current system
//! efficiency, the receiver beamsplitter routes it to the `1` analyzer (-45)
//! or the `0` analyzer (H) with equal odds, and it clicks with the cos^2
//! overlap of its state and the analyzer. Misalignment moves a fraction
//! `optical_error_prob` of those clicks to the opposite detector. Each
//! detector also fires on background light (half of the two-detector
//! figure) and on dark counts. The B92 factor of 1/4 comes out of routing
//! times projection; nothing inserts it by hand.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::params::ProtocolParams;
use crate::polarization::{overlap_probability, Polarization};
use crate::rng::{seeded_rng, Stream};

/// Alice's per-tick truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PulseRecord {
    pub tick: u64,
    pub alice_bit: bool,
    pub sent_state: Polarization,
    pub photon_count: u32,
}

impl PulseRecord {
    pub fn new(tick: u64, alice_bit: bool, photon_count: u32) -> Self {
        PulseRecord {
            tick,
            alice_bit,
            sent_state: Polarization::for_bit(alice_bit),
            photon_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    None,
    Bit0,
    Bit1,
    DualFire,
}

impl Outcome {
    /// The bit Bob infers, if any.
    pub fn bit(self) -> Option<bool> {
        match self {
            Outcome::Bit0 => Some(false),
            Outcome::Bit1 => Some(true),
            _ => None,
        }
    }
}

/// What made the detector(s) fire. Simulation truth only; the protocol layer never reads it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cause {
    Signal,
    Background,
    Dark,
    Mixed,
}

impl Cause {
    pub const ALL: [Cause; 4] = [Cause::Signal, Cause::Background, Cause::Dark, Cause::Mixed];

    pub fn name(self) -> &'static str {
        match self {
            Cause::Signal => "signal",
            Cause::Background => "background",
            Cause::Dark => "dark",
            Cause::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionEvent {
    pub tick: u64,
    pub outcome: Outcome,
    /// `None` exactly when nothing fired.
    pub cause: Option<Cause>,
}

impl DetectionEvent {
    pub fn new(tick: u64, outcome: Outcome) -> Self {
        DetectionEvent {
            tick,
            outcome,
            cause: None,
        }
    }
}

/// Poisson photon-number source for dim pulses.
#[derive(Debug, Clone, Copy)]
pub struct PhotonSource {
    dist: Poisson<f64>,
}

impl PhotonSource {
    /// `mean` must be positive and finite.
    pub fn new(mean: f64) -> Self {
        let dist = Poisson::new(mean).expect("mean photon number must be positive and finite");
        PhotonSource { dist }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.dist.sample(rng) as u32
    }
}

/// One Poisson draw with mean `nbar`.
pub fn draw_photon_count<R: Rng + ?Sized>(nbar: f64, rng: &mut R) -> u32 {
    PhotonSource::new(nbar).draw(rng)
}

/// Gaussian system efficiency clamped to [0, 1].
pub fn draw_eta_system<R: Rng + ?Sized>(params: &ProtocolParams, rng: &mut R) -> f64 {
    if params.eta_system_sigma == 0.0 {
        return params.eta_system_mean.clamp(0.0, 1.0);
    }
    let normal = Normal::new(params.eta_system_mean, params.eta_system_sigma)
        .expect("sigma validated as finite and non-negative");
    normal.sample(rng).clamp(0.0, 1.0)
}

#[derive(Default, Clone, Copy)]
struct Triggers {
    signal: bool,
    background: bool,
    dark: bool,
}

impl Triggers {
    fn fired(self) -> bool {
        self.signal || self.background || self.dark
    }

    fn merge(self, other: Triggers) -> Triggers {
        Triggers {
            signal: self.signal || other.signal,
            background: self.background || other.background,
            dark: self.dark || other.dark,
        }
    }

    fn cause(self) -> Cause {
        match (self.signal, self.background, self.dark) {
            (true, false, false) => Cause::Signal,
            (false, true, false) => Cause::Background,
            (false, false, true) => Cause::Dark,
            _ => Cause::Mixed,
        }
    }
}

/// Simulates one gate for pulse `p` at system efficiency `eta_system_now`.
pub fn transmit_pulse<R: Rng + ?Sized>(
    p: &PulseRecord,
    params: &ProtocolParams,
    eta_system_now: f64,
    rng: &mut R,
) -> DetectionEvent {
    debug_assert!((0.0..=1.0).contains(&eta_system_now));
    // index 0: H analyzer (reads 0), index 1: -45 analyzer (reads 1)
    let mut det = [Triggers::default(); 2];
    for _ in 0..p.photon_count {
        if !rng.random_bool(eta_system_now) {
            continue;
        }
        let path = rng.random_bool(0.5);
        let analyzer = Polarization::analyzer_for_bit(path);
        if rng.random_bool(overlap_probability(p.sent_state, analyzer)) {
            let wrong = rng.random_bool(params.optical_error_prob);
            det[(path ^ wrong) as usize].signal = true;
        }
    }
    let p_bg = params.background_prob_per_gate / 2.0;
    let p_dark = params.dark_prob_per_detector();
    for d in det.iter_mut() {
        d.background = rng.random_bool(p_bg);
        d.dark = rng.random_bool(p_dark);
    }
    let (outcome, cause) = match (det[0].fired(), det[1].fired()) {
        (false, false) => (Outcome::None, None),
        (true, false) => (Outcome::Bit0, Some(det[0].cause())),
        (false, true) => (Outcome::Bit1, Some(det[1].cause())),
        (true, true) => (Outcome::DualFire, Some(det[0].merge(det[1]).cause())),
    };
    DetectionEvent {
        tick: p.tick,
        outcome,
        cause,
    }
}

/// Contiguous tick range sharing one efficiency draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockRun {
    pub start_tick: u64,
    pub len: u64,
    pub eta_system: f64,
}

/// Result of pushing a pulse train through the channel.
#[derive(Debug, Clone, Default)]
pub struct ChannelRun {
    /// Every gate with a firing (None outcomes omitted), in tick order.
    pub events: Vec<DetectionEvent>,
    pub blocks: Vec<BlockRun>,
}

impl ChannelRun {
    pub fn dual_fires(&self) -> u64 {
        self.events
            .iter()
            .filter(|e| e.outcome == Outcome::DualFire)
            .count() as u64
    }
}

/// Splits `n_pulses` into `blocks` nearly equal contiguous ranges.
pub fn block_ranges(n_pulses: u64, blocks: u64) -> Vec<(u64, u64)> {
    let blocks = blocks.clamp(1, n_pulses.max(1));
    let base = n_pulses / blocks;
    let extra = n_pulses % blocks;
    let mut start = 0;
    (0..blocks)
        .map(|b| {
            let len = base + u64::from(b < extra);
            let r = (start, len);
            start += len;
            r
        })
        .collect()
}

/// Runs the channel over `pulses`, redrawing the system efficiency per block.
/// Block `b` draws from the streams `eta-block-b` and `channel-block-b`, so
/// blocks are independent and could be simulated in any order.
pub fn run_channel(
    params: &ProtocolParams,
    pulses: &[PulseRecord],
    blocks: u64,
    seed: u64,
) -> ChannelRun {
    let mut run = ChannelRun::default();
    for (b, (start, len)) in block_ranges(pulses.len() as u64, blocks)
        .into_iter()
        .enumerate()
    {
        let eta = draw_eta_system(params, &mut seeded_rng(seed, &format!("eta-block-{b}")));
        let mut rng: Stream = seeded_rng(seed, &format!("channel-block-{b}"));
        for p in &pulses[start as usize..(start + len) as usize] {
            let ev = transmit_pulse(p, params, eta, &mut rng);
            if ev.outcome != Outcome::None {
                run.events.push(ev);
            }
        }
        run.blocks.push(BlockRun {
            start_tick: start,
            len,
            eta_system: eta,
        });
    }
    run
}
