//! The `fsqkd` command line.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::analytics::{optimize_nbar, rate_curve, write_csv};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::pa::write_key_file;
use crate::session::{run_alice, run_bob, simulate, PartyOutput};
use crate::wire::{Endpoint, Record, TcpTransport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_ABORT: i32 = 2;
pub const EXIT_TRANSPORT: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "fsqkd", version, about = "Free-space B92 QKD simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run both parties in one process and write report, transcript and keys.
    Simulate(Common),
    /// Act as Bob: listen for one Alice and run a session.
    Serve(Common),
    /// Act as Alice: connect to a listening Bob and run a session.
    Connect(Common),
    /// Sweep the mean photon number through the analytic model.
    Analyze(Common),
}

#[derive(Args, Debug, Default)]
pub struct Common {
    /// Flat key=value configuration file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Pulses to send (default 1000000).
    #[arg(long)]
    pub pulses: Option<u64>,
    /// Mean photon number per pulse.
    #[arg(long)]
    pub nbar: Option<f64>,
    /// Seed for every random stream of the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Mean system efficiency.
    #[arg(long)]
    pub eta_system: Option<f64>,
    /// Standard deviation of the system efficiency.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Number of pulse blocks; each redraws the system efficiency.
    #[arg(long)]
    pub blocks: Option<u64>,
    /// Reconciliation cost relative to the Shannon limit.
    #[arg(long)]
    pub recon_efficiency: Option<f64>,
    /// Directory for reports, transcripts, keys and the rate curve.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// host:port Bob listens on and Alice connects to.
    #[arg(long)]
    pub addr: Option<String>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let flags: [(&str, Option<String>); 8] = [
            ("pulses", self.pulses.map(|v| v.to_string())),
            ("nbar", self.nbar.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("eta_system", self.eta_system.map(|v| v.to_string())),
            ("sigma", self.sigma.map(|v| v.to_string())),
            ("blocks", self.blocks.map(|v| v.to_string())),
            (
                "recon_efficiency",
                self.recon_efficiency.map(|v| v.to_string()),
            ),
            ("addr", self.addr.clone()),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v).map_err(|reason| Error::Config {
                    line: 0,
                    reason: format!("--{}: {reason}", k.replace('_', "-")),
                })?;
            }
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        Ok(cfg)
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParam { .. } | Error::Config { .. } => EXIT_USAGE,
        e if e.is_transport() => EXIT_TRANSPORT,
        _ => EXIT_ABORT,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("fsqkd: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Simulate(c) => cmd_simulate(&c.resolve()?),
        Command::Serve(c) => cmd_serve(&c.resolve()?),
        Command::Connect(c) => cmd_connect(&c.resolve()?),
        Command::Analyze(c) => cmd_analyze(&c.resolve()?),
    }
}

fn write_transcript(path: &Path, records: &[Record]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&hex::encode(&r.frame));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_party(dir: &Path, prefix: &str, out: &PartyOutput, records: &[Record]) -> Result<()> {
    fs::write(
        dir.join(format!("{prefix}report.txt")),
        out.report.to_text(),
    )?;
    fs::write(dir.join(format!("{prefix}report.kv")), out.report.to_kv())?;
    write_transcript(&dir.join(format!("{prefix}transcript.hex")), records)?;
    Ok(())
}

fn print_done(out: &PartyOutput, dir: &Path, started: Instant) {
    print!("{}", out.report.to_text());
    println!();
    println!("artifacts in {}", dir.display());
    println!("wall-clock {:.3} s", started.elapsed().as_secs_f64());
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let sim = simulate(&cfg.session())?;
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir)?;
    write_party(dir, "", &sim.bob, &sim.transcript)?;
    let sid = sim.bob.report.session_id;
    write_key_file(
        &dir.join("alice.key"),
        &sim.alice.secret.bits().to_bitvec(),
        sid,
    )?;
    write_key_file(
        &dir.join("bob.key"),
        &sim.bob.secret.bits().to_bitvec(),
        sid,
    )?;
    print_done(&sim.bob, dir, started);
    Ok(())
}

pub fn cmd_serve(cfg: &RunConfig) -> Result<()> {
    let listener = TcpListener::bind(&cfg.addr)?;
    println!("listening on {}", listener.local_addr()?);
    std::io::stdout().flush()?;
    let mut ep = Endpoint::new(Box::new(TcpTransport::accept(&listener)?));
    let started = Instant::now();
    let result = run_bob(&mut ep);
    finish_party(cfg, "bob", result, &ep, started)
}

pub fn cmd_connect(cfg: &RunConfig) -> Result<()> {
    let session = cfg.session();
    let mut ep = Endpoint::new(Box::new(TcpTransport::connect(&cfg.addr)?));
    let started = Instant::now();
    let result = run_alice(&mut ep, &session);
    finish_party(cfg, "alice", result, &ep, started)
}

fn finish_party(
    cfg: &RunConfig,
    who: &str,
    result: Result<PartyOutput>,
    ep: &Endpoint,
    started: Instant,
) -> Result<()> {
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir)?;
    let out = match result {
        Ok(o) => o,
        Err(e) => {
            write_transcript(&dir.join(format!("{who}-transcript.hex")), ep.transcript())?;
            return Err(e);
        }
    };
    write_party(dir, &format!("{who}-"), &out, ep.transcript())?;
    write_key_file(
        &dir.join(format!("{who}.key")),
        &out.secret.bits().to_bitvec(),
        out.report.session_id,
    )?;
    print_done(&out, dir, started);
    Ok(())
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<()> {
    let s = cfg.session();
    let c = s.recon_efficiency;
    let curve = rate_curve(&s.params, c, &cfg.grid)?;
    let best = optimize_nbar(&s.params, c, &cfg.grid)?;
    fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join("rate_curve.csv");
    write_csv(fs::File::create(&path)?, &curve)?;
    println!(
        "eta_system {} sigma {} recon efficiency {c}",
        s.params.eta_system_mean, s.params.eta_system_sigma
    );
    if best.no_yield {
        println!(
            "no secret bit yield for nbar in [{}, {}]",
            cfg.grid.start, cfg.grid.stop
        );
    } else {
        let b = &best.budget;
        println!("nbar_opt {:.2}", best.nbar);
        println!("  sifted rate               {:.1} Hz", b.sifted_rate_hz);
        println!("  BER                       {:.3}%", 100.0 * b.ber_total);
        println!(
            "  secret fraction of sifted {:.3}%",
            100.0 * b.secret_fraction_of_sifted
        );
        println!(
            "  secret fraction of sent   {:.4}%",
            100.0 * b.secret_fraction_of_transmitted
        );
    }
    println!("rate curve written to {}", path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(
            exit_code(&Error::Config {
                line: 1,
                reason: String::new()
            }),
            EXIT_USAGE
        );
        assert_eq!(exit_code(&Error::Disconnected), EXIT_TRANSPORT);
        assert_eq!(
            exit_code(&Error::Aborted {
                phase: "hello",
                reason: String::new()
            }),
            EXIT_ABORT
        );
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["fsqkd", "simulate", "--pulses", "many"]), EXIT_USAGE);
        assert_eq!(run(["fsqkd", "teleport"]), EXIT_USAGE);
        assert_eq!(
            run(["fsqkd", "simulate", "--nbar", "-1", "--pulses", "10"]),
            EXIT_USAGE
        );
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "nbar=0.2\nseed=4\n").unwrap();
        let c = Common {
            config: Some(path),
            nbar: Some(0.5),
            ..Default::default()
        };
        let cfg = c.resolve().unwrap().session();
        assert_eq!(cfg.params.mean_photon_number, 0.5);
        assert_eq!(cfg.params.rng_seed, 4);
    }
}
