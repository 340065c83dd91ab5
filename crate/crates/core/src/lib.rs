//! Free-space B92 quantum key distribution: photon-level channel simulation,
//! sifting over a framed public channel, interactive reconciliation, privacy
//! amplification and a closed-form link-budget model.

pub mod analytics;
pub mod channel;
pub mod cli;
pub mod config;
pub mod error;
pub mod key;
pub mod pa;
pub mod params;
pub mod polarization;
pub mod protocol;
pub mod recon;
pub mod report;
pub mod rng;
pub mod session;
pub mod wire;

pub use error::{Error, Result};
pub use key::{compare_keys, Bits, KeyBuffer, Stage};
pub use params::ProtocolParams;
pub use rng::seeded_rng;
