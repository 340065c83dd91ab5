//! Flat `key=value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Keys are the CLI flag names with
//! `_` for `-` (`nbar`, `seed`, `eta_system`, ...), any [`ProtocolParams`]
//! field name, the reconciliation settings and the analysis grid
//! (`nbar_min`, `nbar_max`, `nbar_step`).

use std::fs;
use std::path::{Path, PathBuf};

use crate::analytics::Grid;
use crate::error::{Error, Result};
use crate::params::ProtocolParams;
use crate::session::{default_blocks, SessionConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub session: SessionConfig,
    /// `None` means one block per 25,000 pulses.
    pub blocks: Option<u64>,
    pub out_dir: PathBuf,
    pub addr: String,
    pub grid: Grid,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            session: SessionConfig::new(ProtocolParams::default(), 1_000_000),
            blocks: None,
            out_dir: PathBuf::from("fsqkd-out"),
            addr: "127.0.0.1:7878".into(),
            grid: Grid::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fail = |reason: String| Error::Config {
                line: i + 1,
                reason,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| fail(format!("expected key=value, found `{line}`")))?;
            cfg.set(k.trim(), v.trim()).map_err(fail)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config {
            line: 0,
            reason: format!("{}: {e}", path.display()),
        })?;
        RunConfig::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            v.parse().map_err(|e| format!("`{v}`: {e}"))
        }
        let s = &mut self.session;
        match key.replace('-', "_").as_str() {
            "pulses" => s.pulses = num(value)?,
            "blocks" => self.blocks = Some(num(value)?),
            "nbar" => s.params.mean_photon_number = num(value)?,
            "seed" => s.params.rng_seed = num(value)?,
            "eta_system" => s.params.eta_system_mean = num(value)?,
            "sigma" => s.params.eta_system_sigma = num(value)?,
            "recon_efficiency" => s.recon_efficiency = num(value)?,
            "sample_fraction" => s.recon.sample_fraction = num(value)?,
            "passes" => s.recon.passes = num(value)?,
            "hash_bits" => s.recon.hash_bits = num(value)?,
            "leaf_len" => s.recon.leaf_len = num(value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "addr" => self.addr = value.to_string(),
            "nbar_min" => self.grid.start = num(value)?,
            "nbar_max" => self.grid.stop = num(value)?,
            "nbar_step" => self.grid.step = num(value)?,
            other => s.params.set(other, value)?,
        }
        Ok(())
    }

    /// Session settings with the block count resolved.
    pub fn session(&self) -> SessionConfig {
        SessionConfig {
            blocks: self
                .blocks
                .unwrap_or_else(|| default_blocks(self.session.pulses)),
            ..self.session
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_daylight_link() {
        let s = RunConfig::default().session();
        assert_eq!(s.pulses, 1_000_000);
        assert_eq!(s.blocks, 40);
        assert_eq!(s.params, ProtocolParams::default());
    }

    #[test]
    fn parses_aliases_and_comments() {
        let cfg = RunConfig::parse(
            "# daylight run\n\npulses = 500000\nnbar=0.2  # dim\nseed=9\neta_system=0.1\n\
             dark_count_rate_hz=1000\nblocks=20\naddr=0.0.0.0:9000\n",
        )
        .unwrap();
        let s = cfg.session();
        assert_eq!(s.pulses, 500_000);
        assert_eq!(s.blocks, 20);
        assert_eq!(s.params.mean_photon_number, 0.2);
        assert_eq!(s.params.rng_seed, 9);
        assert_eq!(s.params.eta_system_mean, 0.1);
        assert_eq!(s.params.dark_count_rate_hz, 1000.0);
        assert_eq!(cfg.addr, "0.0.0.0:9000");
    }

    #[test]
    fn errors_carry_line_numbers() {
        match RunConfig::parse("pulses=10\n\nnbar=lots\n") {
            Err(Error::Config { line: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
        match RunConfig::parse("pulses=10\nwhat\n") {
            Err(Error::Config { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            RunConfig::parse("colour=blue"),
            Err(Error::Config { line: 1, .. })
        ));
    }
}
