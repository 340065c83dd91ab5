//! Closed-form link budget: detection probability, error decomposition, rates
//! and the mean photon number that maximizes secret bits per pulse.

use std::io::Write;

use crate::error::{Error, Result};
use crate::pa::secret_yield_per_sifted_bit;
use crate::params::ProtocolParams;

/// `1 - exp(-eta * nbar)`.
pub fn detection_probability(eta: f64, nbar: f64) -> f64 {
    -(-eta * nbar).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub nbar: f64,
    pub p_signal: f64,
    /// Both detectors.
    pub p_background: f64,
    /// Both detectors.
    pub p_dark: f64,
    pub ber_background: f64,
    pub ber_optical: f64,
    pub ber_dark: f64,
    pub ber_total: f64,
    pub sifted_rate_hz: f64,
    pub secret_fraction_of_sifted: f64,
    pub secret_fraction_of_transmitted: f64,
}

impl LinkBudget {
    pub fn p_total(&self) -> f64 {
        self.p_signal + self.p_background + self.p_dark
    }
}

/// Budget at `nbar` with reconciliation efficiency `c`. Noise clicks err half
/// the time, signal clicks with the optical error probability; every component
/// shares the total click probability as denominator.
pub fn link_budget(params: &ProtocolParams, nbar: f64, c: f64) -> Result<LinkBudget> {
    params.validate()?;
    if !(nbar >= 0.0 && nbar.is_finite()) {
        return Err(Error::param("nbar", "must be non-negative"));
    }
    let p_signal = detection_probability(params.eta_q * params.eta_system_mean, nbar);
    let p_background = params.background_prob_per_gate;
    let p_dark = 2.0 * params.dark_prob_per_detector();
    let p_total = p_signal + p_background + p_dark;
    if p_total <= 0.0 {
        return Err(Error::param("nbar", "no detection probability at all"));
    }
    let ber_background = 0.5 * p_background / p_total;
    let ber_optical = params.optical_error_prob * p_signal / p_total;
    let ber_dark = 0.5 * p_dark / p_total;
    let ber_total = ber_background + ber_optical + ber_dark;
    let secret_fraction_of_sifted = secret_yield_per_sifted_bit(nbar, ber_total, c);
    Ok(LinkBudget {
        nbar,
        p_signal,
        p_background,
        p_dark,
        ber_background,
        ber_optical,
        ber_dark,
        ber_total,
        sifted_rate_hz: p_total * params.clock_rate_hz,
        secret_fraction_of_sifted,
        secret_fraction_of_transmitted: p_total * secret_fraction_of_sifted,
    })
}

/// [`link_budget`] at the Shannon limit.
pub fn ber_model(params: &ProtocolParams, nbar: f64) -> Result<LinkBudget> {
    link_budget(params, nbar, 1.0)
}

/// Evenly spaced mean photon numbers, both ends included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            start: 0.01,
            stop: 0.99,
            step: 0.01,
        }
    }
}

impl Grid {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0 && self.start > 0.0 && self.stop < 1.0 && self.start <= self.stop) {
            return Err(Error::param(
                "grid",
                "need 0 < start <= stop < 1 and step > 0",
            ));
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| self.start + i as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Optimum {
    pub nbar: f64,
    pub budget: LinkBudget,
    /// Every grid point yields nothing.
    pub no_yield: bool,
}

pub fn rate_curve(params: &ProtocolParams, c: f64, grid: &Grid) -> Result<Vec<LinkBudget>> {
    grid.points()?
        .into_iter()
        .map(|nbar| link_budget(params, nbar, c))
        .collect()
}

/// Grid point with the most secret bits per transmitted pulse, the smaller
/// `nbar` on ties.
pub fn optimize_nbar(params: &ProtocolParams, c: f64, grid: &Grid) -> Result<Optimum> {
    let curve = rate_curve(params, c, grid)?;
    let mut best = curve[0];
    for b in &curve[1..] {
        if b.secret_fraction_of_transmitted > best.secret_fraction_of_transmitted {
            best = *b;
        }
    }
    Ok(Optimum {
        nbar: best.nbar,
        budget: best,
        no_yield: best.secret_fraction_of_transmitted <= 0.0,
    })
}

pub const CSV_HEADER: [&str; 11] = [
    "nbar",
    "p_signal",
    "p_background",
    "p_dark",
    "ber_background",
    "ber_optical",
    "ber_dark",
    "ber_total",
    "sifted_rate_hz",
    "secret_fraction_of_sifted",
    "secret_fraction_of_transmitted",
];

pub fn write_csv<W: Write>(out: W, curve: &[LinkBudget]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for b in curve {
        w.write_record(
            [
                b.nbar,
                b.p_signal,
                b.p_background,
                b.p_dark,
                b.ber_background,
                b.ber_optical,
                b.ber_dark,
                b.ber_total,
                b.sifted_rate_hz,
                b.secret_fraction_of_sifted,
                b.secret_fraction_of_transmitted,
            ]
            .map(|v| v.to_string()),
        )
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
