//! Session summary in human-readable and `key=value` form.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::channel::Cause;
use crate::error::{Error, Result};
use crate::params::{ProtocolParams, PARAM_KEYS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Alice,
    Bob,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Alice => "alice",
            Role::Bob => "bob",
        }
    }

    fn from_name(s: &str) -> Option<Role> {
        match s {
            "alice" => Some(Role::Alice),
            "bob" => Some(Role::Bob),
            _ => None,
        }
    }
}

/// Statistics only the side hosting the simulated channel can know.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    /// Sifted positions where the keys disagree, before sampling.
    pub errors: u64,
    /// Errors over sifted bits, split by what fired the detector, in [`Cause::ALL`] order.
    pub errors_by_cause: [u64; 4],
    /// Gates with any detector firing.
    pub detections: u64,
    pub dual_fires: u64,
    /// Mean of the per-block system efficiency draws.
    pub eta_system_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionReport {
    pub role: Role,
    pub session_id: u64,
    pub params: ProtocolParams,
    pub pulses: u64,
    pub blocks: u64,
    pub sifted_bits: u64,
    pub sample_bits: u64,
    pub corrected_bits: u64,
    pub secret_bits: u64,
    pub estimated_ber: Option<f64>,
    pub truth: Option<Truth>,
    pub disclosed_bits: u64,
    pub hash_bits: u64,
    pub passes: u32,
    pub recon_efficiency: Option<f64>,
    pub no_yield: bool,
}

impl SessionReport {
    pub fn sifted_rate_hz(&self) -> f64 {
        self.sifted_bits as f64 / self.pulses as f64 * self.params.clock_rate_hz
    }

    pub fn secret_fraction_of_sifted(&self) -> f64 {
        if self.sifted_bits == 0 {
            0.0
        } else {
            self.secret_bits as f64 / self.sifted_bits as f64
        }
    }

    pub fn secret_fraction_of_transmitted(&self) -> f64 {
        self.secret_bits as f64 / self.pulses as f64
    }

    pub fn truth_ber(&self) -> Option<f64> {
        self.truth
            .as_ref()
            .map(|t| ratio(t.errors, self.sifted_bits))
    }

    /// Share of sifted bits in error because of `cause`.
    pub fn truth_ber_by_cause(&self, cause: Cause) -> Option<f64> {
        let i = Cause::ALL.iter().position(|&c| c == cause)?;
        self.truth
            .as_ref()
            .map(|t| ratio(t.errors_by_cause[i], self.sifted_bits))
    }

    /// `secret <= corrected <= sifted <= pulses`.
    pub fn check_invariants(&self) -> Result<()> {
        let chain = [
            ("secret_bits", self.secret_bits),
            ("corrected_bits", self.corrected_bits),
            ("sifted_bits", self.sifted_bits),
            ("pulses", self.pulses),
        ];
        for w in chain.windows(2) {
            if w[0].1 > w[1].1 {
                return Err(Error::param(
                    w[0].0,
                    format!("{} exceeds {} {}", w[0].1, w[1].0, w[1].1),
                ));
            }
        }
        Ok(())
    }

    fn pairs(&self) -> Vec<(String, String)> {
        let mut v: Vec<(String, String)> = vec![
            ("role".into(), self.role.name().into()),
            ("session_id".into(), format!("{:016x}", self.session_id)),
            ("pulses".into(), self.pulses.to_string()),
            ("blocks".into(), self.blocks.to_string()),
        ];
        for (k, val) in self.params.to_pairs() {
            v.push((format!("param.{k}"), val));
        }
        v.extend([
            ("sifted_bits".into(), self.sifted_bits.to_string()),
            ("sample_bits".into(), self.sample_bits.to_string()),
            ("corrected_bits".into(), self.corrected_bits.to_string()),
            ("secret_bits".into(), self.secret_bits.to_string()),
            ("estimated_ber".into(), opt(self.estimated_ber)),
        ]);
        match &self.truth {
            None => v.push(("truth".into(), "none".into())),
            Some(t) => {
                v.push(("truth.errors".into(), t.errors.to_string()));
                for (c, n) in Cause::ALL.iter().zip(t.errors_by_cause) {
                    v.push((format!("truth.errors.{}", c.name()), n.to_string()));
                }
                v.push(("truth.detections".into(), t.detections.to_string()));
                v.push(("truth.dual_fires".into(), t.dual_fires.to_string()));
                v.push((
                    "truth.eta_system_mean".into(),
                    t.eta_system_mean.to_string(),
                ));
            }
        }
        v.extend([
            ("disclosed_bits".into(), self.disclosed_bits.to_string()),
            ("hash_bits".into(), self.hash_bits.to_string()),
            ("passes".into(), self.passes.to_string()),
            ("recon_efficiency".into(), opt(self.recon_efficiency)),
            ("no_yield".into(), self.no_yield.to_string()),
        ]);
        v
    }

    /// One `key=value` per line. Derived rates are included for convenience
    /// and ignored by the parser.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.pairs() {
            let _ = writeln!(out, "{k}={v}");
        }
        let _ = writeln!(out, "derived.sifted_rate_hz={}", self.sifted_rate_hz());
        if let Some(b) = self.truth_ber() {
            let _ = writeln!(out, "derived.truth_ber={b}");
        }
        let _ = writeln!(
            out,
            "derived.secret_fraction_of_sifted={}",
            self.secret_fraction_of_sifted()
        );
        let _ = writeln!(
            out,
            "derived.secret_fraction_of_transmitted={}",
            self.secret_fraction_of_transmitted()
        );
        out
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                line: i + 1,
                reason: format!("expected key=value, found `{line}`"),
            })?;
            if !k.starts_with("derived.") {
                map.insert(k.to_string(), (i + 1, v.to_string()));
            }
        }
        let mut r = Fields { map };
        let mut params = ProtocolParams::default();
        for key in PARAM_KEYS {
            let (line, v) = r.take(&format!("param.{key}"))?;
            params
                .set(key, &v)
                .map_err(|reason| Error::Config { line, reason })?;
        }
        let truth = if r.map.contains_key("truth") {
            r.take("truth")?;
            None
        } else {
            let mut by_cause = [0u64; 4];
            for (i, c) in Cause::ALL.iter().enumerate() {
                by_cause[i] = r.parse(&format!("truth.errors.{}", c.name()))?;
            }
            Some(Truth {
                errors: r.parse("truth.errors")?,
                errors_by_cause: by_cause,
                detections: r.parse("truth.detections")?,
                dual_fires: r.parse("truth.dual_fires")?,
                eta_system_mean: r.parse("truth.eta_system_mean")?,
            })
        };
        let (line, role) = r.take("role")?;
        let (line2, sid) = r.take("session_id")?;
        let report = SessionReport {
            role: Role::from_name(&role).ok_or_else(|| Error::Config {
                line,
                reason: format!("unknown role `{role}`"),
            })?,
            session_id: u64::from_str_radix(&sid, 16).map_err(|e| Error::Config {
                line: line2,
                reason: e.to_string(),
            })?,
            params,
            pulses: r.parse("pulses")?,
            blocks: r.parse("blocks")?,
            sifted_bits: r.parse("sifted_bits")?,
            sample_bits: r.parse("sample_bits")?,
            corrected_bits: r.parse("corrected_bits")?,
            secret_bits: r.parse("secret_bits")?,
            estimated_ber: r.parse_opt("estimated_ber")?,
            truth,
            disclosed_bits: r.parse("disclosed_bits")?,
            hash_bits: r.parse("hash_bits")?,
            passes: r.parse("passes")?,
            recon_efficiency: r.parse_opt("recon_efficiency")?,
            no_yield: r.parse("no_yield")?,
        };
        if let Some((k, (line, _))) = r.map.into_iter().next() {
            return Err(Error::Config {
                line,
                reason: format!("unknown key `{k}`"),
            });
        }
        Ok(report)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let pct = |x: f64| format!("{:.3}%", 100.0 * x);
        let p = &self.params;
        let _ = writeln!(
            s,
            "QKD session {:016x} ({})",
            self.session_id,
            self.role.name()
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "Parameters");
        let _ = writeln!(s, "  seed                 {}", p.rng_seed);
        let _ = writeln!(s, "  mean photon number   {}", p.mean_photon_number);
        let _ = writeln!(
            s,
            "  system efficiency    {} (sigma {})",
            p.eta_system_mean, p.eta_system_sigma
        );
        let _ = writeln!(s, "  clock                {} Hz", p.clock_rate_hz);
        let _ = writeln!(s, "  gate width           {} s", p.gate_width_s);
        let _ = writeln!(s, "  background per gate  {}", p.background_prob_per_gate);
        let _ = writeln!(
            s,
            "  dark counts          {} Hz per detector",
            p.dark_count_rate_hz
        );
        let _ = writeln!(s, "  optical error        {}", p.optical_error_prob);
        let _ = writeln!(s);
        let _ = writeln!(s, "Key lengths");
        let _ = writeln!(
            s,
            "  pulses sent          {} in {} blocks",
            self.pulses, self.blocks
        );
        let _ = writeln!(
            s,
            "  sifted               {} ({:.1} Hz)",
            self.sifted_bits,
            self.sifted_rate_hz()
        );
        let _ = writeln!(s, "  sampled for BER      {}", self.sample_bits);
        let _ = writeln!(s, "  corrected            {}", self.corrected_bits);
        let _ = writeln!(s, "  secret               {}", self.secret_bits);
        let _ = writeln!(s);
        let _ = writeln!(s, "Error rate");
        match self.estimated_ber {
            Some(e) => {
                let _ = writeln!(s, "  estimated            {}", pct(e));
            }
            None => {
                let _ = writeln!(s, "  estimated            (not known to this side)");
            }
        }
        if let Some(t) = &self.truth {
            let _ = writeln!(
                s,
                "  simulation truth     {} ({} errors)",
                pct(ratio(t.errors, self.sifted_bits)),
                t.errors
            );
            for (c, n) in Cause::ALL.iter().zip(t.errors_by_cause) {
                let _ = writeln!(
                    s,
                    "    {:<18} {}",
                    c.name(),
                    pct(ratio(n, self.sifted_bits))
                );
            }
            let _ = writeln!(s, "  detections           {}", t.detections);
            let _ = writeln!(
                s,
                "  dual fires           {} ({:.2e} per gate, {:.2e} per detection)",
                t.dual_fires,
                ratio(t.dual_fires, self.pulses),
                ratio(t.dual_fires, t.detections)
            );
            let _ = writeln!(s, "  mean system eff.     {:.4}", t.eta_system_mean);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "Disclosure");
        let _ = writeln!(
            s,
            "  reconciliation       {} bits in {} passes",
            self.disclosed_bits, self.passes
        );
        let _ = writeln!(s, "  verification hash    {} bits", self.hash_bits);
        let _ = writeln!(s, "  BER sample           {} bits", self.sample_bits);
        if let Some(c) = self.recon_efficiency {
            let _ = writeln!(s, "  efficiency           {c:.3} x Shannon limit");
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "Yield");
        if self.no_yield {
            let _ = writeln!(s, "  no secret bit yield");
        }
        let _ = writeln!(
            s,
            "  of sifted key        {}",
            pct(self.secret_fraction_of_sifted())
        );
        let _ = writeln!(
            s,
            "  of pulses sent       {}",
            pct(self.secret_fraction_of_transmitted())
        );
        s
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".into(), |x| x.to_string())
}

struct Fields {
    map: BTreeMap<String, (usize, String)>,
}

impl Fields {
    fn take(&mut self, key: &str) -> Result<(usize, String)> {
        self.map.remove(key).ok_or_else(|| Error::Config {
            line: 0,
            reason: format!("missing key `{key}`"),
        })
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let (line, v) = self.take(key)?;
        v.parse().map_err(|e: T::Err| Error::Config {
            line,
            reason: format!("`{key}`: {e}"),
        })
    }

    fn parse_opt(&mut self, key: &str) -> Result<Option<f64>> {
        let (line, v) = self.take(key)?;
        if v == "none" {
            return Ok(None);
        }
        v.parse().map(Some).map_err(|e| Error::Config {
            line,
            reason: format!("`{key}`: {e}"),
        })
    }
}
