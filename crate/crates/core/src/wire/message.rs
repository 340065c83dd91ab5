use crate::key::Bits;

/// Wire protocol version carried in Hello.
pub const PROTOCOL_VERSION: u32 = 1;

/// Message kinds, in wire-name order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    Hello,
    SiftIndices,
    SampleRequest,
    SampleReveal,
    ShuffleSeed,
    BlockParity,
    Syndrome,
    VerifyHash,
    PaSeed,
    Abort,
    Done,
}

impl Kind {
    pub const ALL: [Kind; 11] = [
        Kind::Hello,
        Kind::SiftIndices,
        Kind::SampleRequest,
        Kind::SampleReveal,
        Kind::ShuffleSeed,
        Kind::BlockParity,
        Kind::Syndrome,
        Kind::VerifyHash,
        Kind::PaSeed,
        Kind::Abort,
        Kind::Done,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Hello => "Hello",
            Kind::SiftIndices => "SiftIndices",
            Kind::SampleRequest => "SampleRequest",
            Kind::SampleReveal => "SampleReveal",
            Kind::ShuffleSeed => "ShuffleSeed",
            Kind::BlockParity => "BlockParity",
            Kind::Syndrome => "Syndrome",
            Kind::VerifyHash => "VerifyHash",
            Kind::PaSeed => "PaSeed",
            Kind::Abort => "Abort",
            Kind::Done => "Done",
        }
    }

    pub fn from_name(name: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// Session setup sent by the connecting side and echoed back by the listener.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hello {
    pub version: u32,
    pub seed: u64,
    pub pulses: u64,
    pub blocks: u64,
    /// Space-separated `key=value` session settings.
    pub settings: String,
}

/// A contiguous run of positions inside one block of one reconciliation pass,
/// addressed in that pass's permuted order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Span {
    pub pass: u32,
    pub block: u32,
    pub start: u32,
    pub len: u32,
}

/// Parity traffic: Alice asks for spans, Bob answers with one bit per span,
/// or volunteers all block parities of a pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParityMsg {
    Query(Vec<Span>),
    Answer(Bits),
}

/// Syndrome traffic: Alice names spans, Bob answers with one syndrome vector per span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SyndromeMsg {
    Query(Vec<Span>),
    Answer(Vec<Bits>),
}

/// Phase tags carried by Done: the sender has finished that phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Sift = 1,
    Pass = 2,
    NoYield = 3,
    Final = 4,
}

impl Phase {
    pub fn from_u8(v: u8) -> Option<Phase> {
        Some(match v {
            1 => Phase::Sift,
            2 => Phase::Pass,
            3 => Phase::NoYield,
            4 => Phase::Final,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    Hello(Hello),
    SiftIndices(Vec<u64>),
    SampleRequest(Vec<u64>),
    SampleReveal(Bits),
    ShuffleSeed {
        seed: u64,
        pass: u32,
        block_len: u32,
    },
    BlockParity(ParityMsg),
    Syndrome(SyndromeMsg),
    VerifyHash {
        key_seed: u64,
        hash: u128,
    },
    PaSeed {
        seed: u64,
        output_len: u64,
    },
    Abort(String),
    Done(Phase),
}

impl Body {
    pub fn kind(&self) -> Kind {
        match self {
            Body::Hello(_) => Kind::Hello,
            Body::SiftIndices(_) => Kind::SiftIndices,
            Body::SampleRequest(_) => Kind::SampleRequest,
            Body::SampleReveal(_) => Kind::SampleReveal,
            Body::ShuffleSeed { .. } => Kind::ShuffleSeed,
            Body::BlockParity(_) => Kind::BlockParity,
            Body::Syndrome(_) => Kind::Syndrome,
            Body::VerifyHash { .. } => Kind::VerifyHash,
            Body::PaSeed { .. } => Kind::PaSeed,
            Body::Abort(_) => Kind::Abort,
            Body::Done(_) => Kind::Done,
        }
    }
}

/// One public-channel protocol unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub session_id: u64,
    /// Per-sender counter starting at 0, without gaps.
    pub seq: u64,
    pub body: Body,
}

impl Message {
    pub fn kind(&self) -> Kind {
        self.body.kind()
    }
}
