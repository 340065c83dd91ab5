use std::io;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("stage mismatch: {left:?} vs {right:?}")]
    StageMismatch {
        left: crate::key::Stage,
        right: crate::key::Stage,
    },

    #[error("index list invalid at position {position}: {reason}")]
    InvalidIndices { position: usize, reason: String },

    #[error("events out of tick order at position {position}")]
    UnorderedEvents { position: usize },

    #[error("empty BER sample")]
    EmptySample,

    #[error("wire format: {0}")]
    Codec(String),

    #[error("payload of {0} bytes exceeds the 2^24 byte limit")]
    PayloadTooLarge(usize),

    #[error("receive timed out after {0:?}")]
    Timeout(std::time::Duration),

    #[error("peer disconnected")]
    Disconnected,

    #[error("sequence violation: expected {expected}, got {got}")]
    Sequence { expected: u64, got: u64 },

    #[error("protocol violation in {phase}: {reason}")]
    Protocol { phase: &'static str, reason: String },

    #[error("session aborted in {phase}: {reason}")]
    Aborted { phase: &'static str, reason: String },

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn protocol(phase: &'static str, reason: impl Into<String>) -> Self {
        Error::Protocol {
            phase,
            reason: reason.into(),
        }
    }

    /// True for failures of the underlying transport rather than of the protocol.
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            Error::Timeout(_) | Error::Disconnected | Error::Io(_) | Error::Codec(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
