use crate::error::{Error, Result};

/// Physical and protocol constants for one session.
///
/// `Default` reproduces the 1.6 km daylight link: 1 MHz clock, 5 ns gate,
/// system efficiency 0.13 +/- 0.04, background 6.7e-4 per gate for both
/// detectors, 1,400 dark counts per second per detector and 1.9 %
/// polarization error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    pub clock_rate_hz: f64,
    pub mean_photon_number: f64,
    /// Protocol quantum efficiency, 0.25 for B92. Used by the analytic model only;
    /// the simulator produces it from routing and projection.
    pub eta_q: f64,
    pub eta_system_mean: f64,
    pub eta_system_sigma: f64,
    pub gate_width_s: f64,
    /// Background firing probability per gate, summed over both detectors.
    pub background_prob_per_gate: f64,
    /// Dark count rate of each detector.
    pub dark_count_rate_hz: f64,
    /// Fraction of signal clicks that land in the wrong analyzer.
    pub optical_error_prob: f64,
    pub rng_seed: u64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            clock_rate_hz: 1.0e6,
            mean_photon_number: 0.35,
            eta_q: 0.25,
            eta_system_mean: 0.13,
            eta_system_sigma: 0.04,
            gate_width_s: 5.0e-9,
            background_prob_per_gate: 6.7e-4,
            dark_count_rate_hz: 1400.0,
            optical_error_prob: 0.019,
            rng_seed: 0,
        }
    }
}

/// Names accepted by [`ProtocolParams::set`], in canonical output order.
pub const PARAM_KEYS: [&str; 10] = [
    "clock_rate_hz",
    "mean_photon_number",
    "eta_q",
    "eta_system_mean",
    "eta_system_sigma",
    "gate_width_s",
    "background_prob_per_gate",
    "dark_count_rate_hz",
    "optical_error_prob",
    "rng_seed",
];

impl ProtocolParams {
    /// Same parameters with every noise source switched off.
    pub fn noiseless(self) -> Self {
        ProtocolParams {
            background_prob_per_gate: 0.0,
            dark_count_rate_hz: 0.0,
            optical_error_prob: 0.0,
            ..self
        }
    }

    /// Per-detector dark firing probability within one gate.
    pub fn dark_prob_per_detector(&self) -> f64 {
        self.dark_count_rate_hz * self.gate_width_s
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &'static str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::param(name, format!("{v} is not a probability")))
            }
        };
        if !(self.clock_rate_hz > 0.0 && self.clock_rate_hz.is_finite()) {
            return Err(Error::param("clock_rate_hz", "must be positive"));
        }
        if !(self.mean_photon_number > 0.0 && self.mean_photon_number.is_finite()) {
            return Err(Error::param("mean_photon_number", "must be positive"));
        }
        prob("eta_q", self.eta_q)?;
        if !(self.eta_system_mean > 0.0 && self.eta_system_mean <= 1.0) {
            return Err(Error::param("eta_system_mean", "must lie in (0, 1]"));
        }
        if !(self.eta_system_sigma >= 0.0 && self.eta_system_sigma.is_finite()) {
            return Err(Error::param("eta_system_sigma", "must be non-negative"));
        }
        if !(self.gate_width_s >= 0.0 && self.gate_width_s.is_finite()) {
            return Err(Error::param("gate_width_s", "must be non-negative"));
        }
        prob("background_prob_per_gate", self.background_prob_per_gate)?;
        if !(self.dark_count_rate_hz >= 0.0 && self.dark_count_rate_hz.is_finite()) {
            return Err(Error::param("dark_count_rate_hz", "must be non-negative"));
        }
        prob(
            "dark_count_rate_hz * gate_width_s",
            self.dark_prob_per_detector(),
        )?;
        prob("optical_error_prob", self.optical_error_prob)?;
        Ok(())
    }

    /// Assigns one field by name from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let float = || {
            value
                .parse::<f64>()
                .map_err(|e| format!("`{value}` is not a number: {e}"))
        };
        match key {
            "clock_rate_hz" => self.clock_rate_hz = float()?,
            "mean_photon_number" => self.mean_photon_number = float()?,
            "eta_q" => self.eta_q = float()?,
            "eta_system_mean" => self.eta_system_mean = float()?,
            "eta_system_sigma" => self.eta_system_sigma = float()?,
            "gate_width_s" => self.gate_width_s = float()?,
            "background_prob_per_gate" => self.background_prob_per_gate = float()?,
            "dark_count_rate_hz" => self.dark_count_rate_hz = float()?,
            "optical_error_prob" => self.optical_error_prob = float()?,
            "rng_seed" => {
                self.rng_seed = value
                    .parse()
                    .map_err(|e| format!("`{value}` is not a 64-bit seed: {e}"))?
            }
            _ => return Err(format!("unknown parameter `{key}`")),
        }
        Ok(())
    }

    /// `(key, value)` pairs in [`PARAM_KEYS`] order. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("clock_rate_hz", self.clock_rate_hz.to_string()),
            ("mean_photon_number", self.mean_photon_number.to_string()),
            ("eta_q", self.eta_q.to_string()),
            ("eta_system_mean", self.eta_system_mean.to_string()),
            ("eta_system_sigma", self.eta_system_sigma.to_string()),
            ("gate_width_s", self.gate_width_s.to_string()),
            (
                "background_prob_per_gate",
                self.background_prob_per_gate.to_string(),
            ),
            ("dark_count_rate_hz", self.dark_count_rate_hz.to_string()),
            ("optical_error_prob", self.optical_error_prob.to_string()),
            ("rng_seed", self.rng_seed.to_string()),
        ]
    }

    /// Space-separated `key=value` form carried in the Hello message.
    pub fn to_kv_line(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn from_kv_line(line: &str) -> Result<Self> {
        let mut params = ProtocolParams::default();
        for field in line.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| Error::Codec(format!("malformed parameter field `{field}`")))?;
            params.set(k, v).map_err(Error::Codec)?;
        }
        params.validate()?;
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ProtocolParams::default().validate().unwrap();
        ProtocolParams::default().noiseless().validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range() {
        let bad = [
            ProtocolParams {
                mean_photon_number: 0.0,
                ..Default::default()
            },
            ProtocolParams {
                eta_q: 1.5,
                ..Default::default()
            },
            ProtocolParams {
                eta_system_mean: 0.0,
                ..Default::default()
            },
            ProtocolParams {
                optical_error_prob: -0.1,
                ..Default::default()
            },
            ProtocolParams {
                background_prob_per_gate: 2.0,
                ..Default::default()
            },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }

    #[test]
    fn kv_line_round_trips() {
        let p = ProtocolParams {
            mean_photon_number: 0.2,
            rng_seed: u64::MAX,
            eta_system_sigma: 0.0,
            ..Default::default()
        };
        assert_eq!(ProtocolParams::from_kv_line(&p.to_kv_line()).unwrap(), p);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(ProtocolParams::from_kv_line("nbar=0.3").is_err());
    }
}
