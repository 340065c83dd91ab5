//! Acceptance run: one line per criterion, nonzero exit if any fails.

use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::Instant;

use fsqkd::analytics::{optimize_nbar, rate_curve, Grid};
use fsqkd::channel::{run_channel, Cause, Outcome, PulseRecord};
use fsqkd::key::bits_from_str;
use fsqkd::pa::{compress, read_key_file, PaPlan};
use fsqkd::recon::{reconcile_pair, shannon_leak_per_bit, ReconConfig};
use fsqkd::session::{run_alice, run_bob, simulate, SessionConfig};
use fsqkd::wire::{Endpoint, TcpTransport};
use fsqkd::{compare_keys, seeded_rng, Bits, KeyBuffer, ProtocolParams, Stage};
use rand::Rng;

const RUN_SEED: u64 = 19990813;

// Tolerances.
const TOL_F: f64 = 0.001;
const TOL_SIFT: f64 = 0.005;
const TOL_RATE_REL: f64 = 0.25;
const TOL_BER_PP: f64 = 0.015;
const MAX_DARK_BER: f64 = 0.001;
const MAX_RECON_RATIO: f64 = 1.2;
const YIELD_NBAR: (f64, f64) = (0.30, 0.50);
const YIELD_SENT: (f64, f64) = (0.0025, 0.0055);
const TOL_PA: f64 = 0.05;

const SAMPLE_ALICE: [&str; 5] = [
    "00011011110111010111010000101011111101111101110000",
    "01111110111100011011000010111101110010000101001010",
    "00011110111110000100011111001111011011011101101111",
    "10010010100100100100111100000001101001111100101111",
    "11111111111111111000011111011101101110101100011101",
];
const SAMPLE_BOB: [&str; 5] = [
    "10011011110011010110011000101011111101111101110000",
    "01111110101100011011000000111101110010000101001010",
    "00011110110110000100011111001111011011011101101111",
    "10010010100100100100111100000001101001111100101011",
    "11111111111111111000011111011101101110101100011101",
];

type Verdict = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_entropy() -> Verdict {
    let f = shannon_leak_per_bit(0.041).map_err(|e| e.to_string())?;
    check((f - 0.246).abs() <= TOL_F, format!("f(0.041) = {f:.5}"))
}

fn c2_sifting_efficiency() -> Verdict {
    let params = ProtocolParams {
        eta_system_mean: 1.0,
        eta_system_sigma: 0.0,
        ..ProtocolParams::default()
    }
    .noiseless();
    let n = 1_000_000u64;
    let mut rng = seeded_rng(RUN_SEED, "single-photon-bits");
    let pulses: Vec<PulseRecord> = (0..n)
        .map(|t| PulseRecord::new(t, rng.random_bool(0.5), 1))
        .collect();
    let run = run_channel(&params, &pulses, 10, RUN_SEED);
    let conclusive = run
        .events
        .iter()
        .filter(|e| matches!(e.outcome, Outcome::Bit0 | Outcome::Bit1))
        .count();
    let frac = conclusive as f64 / n as f64;
    check(
        (frac - 0.25).abs() <= TOL_SIFT,
        format!("sifted fraction {frac:.4}"),
    )
}

struct Run {
    nbar: f64,
    rate: f64,
    ber: f64,
    bg: f64,
    dark: f64,
}

fn link_runs() -> Result<Vec<Run>, String> {
    [0.2, 0.35, 0.5]
        .into_iter()
        .map(|nbar| {
            let params = ProtocolParams {
                mean_photon_number: nbar,
                eta_system_mean: 0.13,
                eta_system_sigma: 0.0,
                rng_seed: RUN_SEED,
                ..ProtocolParams::default()
            };
            let sim =
                simulate(&SessionConfig::new(params, 1_000_000)).map_err(|e| e.to_string())?;
            let r = &sim.bob.report;
            Ok(Run {
                nbar,
                rate: r.sifted_rate_hz(),
                ber: r.truth_ber().unwrap_or(f64::NAN),
                bg: r.truth_ber_by_cause(Cause::Background).unwrap_or(f64::NAN),
                dark: r.truth_ber_by_cause(Cause::Dark).unwrap_or(f64::NAN),
            })
        })
        .collect()
}

fn c3_rates(runs: &[Run]) -> Verdict {
    let expected = [5400.0, 12200.0, 17000.0];
    let mut ok = true;
    let mut parts = Vec::new();
    for (r, want) in runs.iter().zip(expected) {
        let good = (r.rate - want).abs() <= TOL_RATE_REL * want;
        ok &= good;
        parts.push(format!(
            "nbar {}: {:.0} Hz vs {want:.0} [{}]",
            r.nbar,
            r.rate,
            if good { "ok" } else { "out" }
        ));
    }
    check(ok, parts.join("; "))
}

fn c4_ber(runs: &[Run]) -> Verdict {
    let total = [0.078, 0.041, 0.041];
    let background = [0.059, 0.024, 0.019];
    let mut ok = true;
    let mut parts = Vec::new();
    for ((r, t), b) in runs.iter().zip(total).zip(background) {
        let good = (r.ber - t).abs() <= TOL_BER_PP
            && (r.bg - b).abs() <= TOL_BER_PP
            && r.dark < MAX_DARK_BER;
        ok &= good;
        parts.push(format!(
            "nbar {}: total {:.2}% bg {:.2}% dark {:.3}% [{}]",
            r.nbar,
            100.0 * r.ber,
            100.0 * r.bg,
            100.0 * r.dark,
            if good { "ok" } else { "out" }
        ));
    }
    check(ok, parts.join("; "))
}

fn c5_sample_key() -> Verdict {
    let key = |rows: [&str; 5]| -> Result<KeyBuffer, String> {
        let bits: Bits = bits_from_str(&rows.concat()).map_err(|e| e.to_string())?;
        Ok(KeyBuffer::new(Stage::Sifted, bits))
    };
    let (a, b) = (key(SAMPLE_ALICE)?, key(SAMPLE_BOB)?);
    let (errors, ber) = compare_keys(&a, &b).map_err(|e| e.to_string())?;
    check(
        a.len() == 250 && errors == 8 && (ber - 0.032).abs() < 1e-12,
        format!("{} bits, {errors} errors, BER {:.1}%", a.len(), 100.0 * ber),
    )
}

fn c6_reconciliation() -> Verdict {
    let n = 10_000;
    let mut ok = true;
    let mut parts = Vec::new();
    for eps in [0.01, 0.03, 0.05] {
        let mut disclosed = 0u64;
        let mut all_verified = true;
        for seed in 0..20u64 {
            let mut rng = seeded_rng(seed, &format!("planted-{eps}"));
            let b: Bits = (0..n).map(|_| rng.random::<bool>()).collect();
            let a: Bits = b
                .iter()
                .by_vals()
                .map(|x| x ^ rng.random_bool(eps))
                .collect();
            let out = reconcile_pair(
                KeyBuffer::new(Stage::Sifted, a),
                KeyBuffer::new(Stage::Sifted, b),
                eps,
                &ReconConfig::default(),
                seed,
            )
            .map_err(|e| format!("eps {eps} seed {seed}: {e}"))?;
            all_verified &= out.alice.verified
                && out.bob.verified
                && out.alice.corrected_key.bits() == out.bob.corrected_key.bits();
            disclosed += out.bob.disclosed_bits;
        }
        let mean = disclosed as f64 / 20.0;
        let bound = n as f64 * shannon_leak_per_bit(eps).unwrap();
        let good = all_verified && mean <= MAX_RECON_RATIO * bound;
        ok &= good;
        parts.push(format!(
            "eps {eps}: mean disclosed {mean:.0} = {:.3} f(eps) n, verified {all_verified}",
            mean / bound
        ));
    }
    check(ok, parts.join("; "))
}

fn c7_optimum() -> Verdict {
    let best = optimize_nbar(&ProtocolParams::default(), 1.0, &Grid::default())
        .map_err(|e| e.to_string())?;
    let y = best.budget.secret_fraction_of_transmitted;
    check(
        !best.no_yield
            && (YIELD_NBAR.0..=YIELD_NBAR.1).contains(&best.nbar)
            && (YIELD_SENT.0..=YIELD_SENT.1).contains(&y),
        format!("nbar_opt {:.2}, yield {:.3}% of sent", best.nbar, 100.0 * y),
    )
}

fn c8_no_yield() -> Verdict {
    let dim = ProtocolParams {
        eta_system_mean: 0.03,
        ..ProtocolParams::default()
    };
    let grid = Grid::default();
    let dim_curve = rate_curve(&dim, 1.0, &grid).map_err(|e| e.to_string())?;
    let dim_max = dim_curve
        .iter()
        .map(|b| b.secret_fraction_of_transmitted)
        .fold(0.0, f64::max);
    let low = Grid {
        start: 0.01,
        stop: 0.05,
        step: 0.01,
    };
    let low_curve = rate_curve(&ProtocolParams::default(), 1.0, &low).map_err(|e| e.to_string())?;
    let low_max = low_curve
        .iter()
        .map(|b| b.secret_fraction_of_transmitted)
        .fold(0.0, f64::max);
    check(
        dim_max == 0.0 && low_max == 0.0 && low_curve.len() == 5,
        format!("max yield at eta 0.03: {dim_max}; at eta 0.13, nbar <= 0.05: {low_max}"),
    )
}

fn fsqkd(args: &[&str]) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fsqkd"));
    c.args(args);
    c
}

fn read(dir: &Path, name: &str) -> Result<Vec<u8>, String> {
    std::fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"))
}

fn two_process_run(seed: u64, dir: &Path) -> Result<usize, String> {
    let out = dir.to_str().unwrap();
    let seed = seed.to_string();
    let common = ["--pulses", "1000000", "--seed", &seed, "--out-dir", out];
    let mut serve = fsqkd(&["serve", "--addr", "127.0.0.1:0"])
        .args(common)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut stdout = BufReader::new(serve.stdout.take().unwrap());
    let mut line = String::new();
    stdout.read_line(&mut line).map_err(|e| e.to_string())?;
    let drain = thread::spawn(move || std::io::copy(&mut stdout, &mut std::io::sink()));
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .ok_or_else(|| format!("unexpected serve output `{line}`"))?
        .to_string();
    let connect = fsqkd(&["connect", "--addr", &addr])
        .args(common)
        .stdout(Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    let serve = serve.wait().map_err(|e| e.to_string())?;
    let _ = drain.join();
    if !connect.success() || !serve.success() {
        return Err(format!("seed {seed}: exit {connect} / {serve}"));
    }
    let (a, sa) = read_key_file(&dir.join("alice.key")).map_err(|e| e.to_string())?;
    let (b, sb) = read_key_file(&dir.join("bob.key")).map_err(|e| e.to_string())?;
    if read(dir, "alice.key")? != read(dir, "bob.key")? || a != b || sa != sb {
        return Err(format!("seed {seed}: key files differ"));
    }
    Ok(a.len())
}

fn c9_determinism() -> Verdict {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let files = [
        "report.txt",
        "report.kv",
        "transcript.hex",
        "alice.key",
        "bob.key",
    ];
    let mut snapshots = Vec::new();
    for run in ["first", "second"] {
        let dir = tmp.path().join(run);
        let status = fsqkd(&[
            "simulate",
            "--seed",
            "7",
            "--out-dir",
            dir.to_str().unwrap(),
        ])
        .stdout(Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("simulate exited with {status}"));
        }
        snapshots.push(
            files
                .iter()
                .map(|f| read(&dir, f))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    let identical = snapshots[0] == snapshots[1] && snapshots[0][3] == snapshots[0][4];

    // In-process TCP pairs, then separate processes.
    for seed in 0..20u64 {
        let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
        let addr = listener.local_addr().unwrap();
        let bob = thread::spawn(move || {
            let mut ep = Endpoint::new(Box::new(TcpTransport::accept(&listener)?));
            run_bob(&mut ep)
        });
        let cfg = SessionConfig::new(
            ProtocolParams {
                rng_seed: seed,
                ..ProtocolParams::default()
            },
            100_000,
        );
        let mut ep = Endpoint::new(Box::new(
            TcpTransport::connect(addr).map_err(|e| e.to_string())?,
        ));
        let alice = run_alice(&mut ep, &cfg).map_err(|e| format!("seed {seed}: {e}"))?;
        let bob = bob
            .join()
            .unwrap()
            .map_err(|e| format!("seed {seed}: {e}"))?;
        if alice.secret.bits() != bob.secret.bits() {
            return Err(format!("seed {seed}: in-process TCP keys differ"));
        }
    }
    let mut nonempty = 0;
    for seed in 0..20u64 {
        if two_process_run(seed, &tmp.path().join(format!("pair-{seed}")))? > 0 {
            nonempty += 1;
        }
    }
    check(
        identical,
        format!(
            "simulate twice byte-identical; 20 TCP pairs agree; 20 two-process runs agree, {nonempty} with nonempty keys"
        ),
    )
}

fn c10_pa_avalanche() -> Verdict {
    let n = 256;
    let out_len = 64;
    let flip = 97;
    let mut rng = seeded_rng(RUN_SEED, "pa-avalanche-key");
    let key: Bits = (0..n).map(|_| rng.random::<bool>()).collect();
    let mut flipped = key.clone();
    let v = !flipped[flip];
    flipped.set(flip, v);
    let (key, flipped) = (
        KeyBuffer::new(Stage::Corrected, key),
        KeyBuffer::new(Stage::Corrected, flipped),
    );
    let mut counts = vec![0u32; out_len];
    let seeds = 1000u64;
    for seed in 0..seeds {
        let plan = PaPlan::new(n, out_len, seed).map_err(|e| e.to_string())?;
        let a = compress(&key, &plan).map_err(|e| e.to_string())?;
        let b = compress(&flipped, &plan).map_err(|e| e.to_string())?;
        for (i, c) in counts.iter_mut().enumerate() {
            *c += u32::from(a.bits()[i] != b.bits()[i]);
        }
    }
    let rates: Vec<f64> = counts.iter().map(|&c| c as f64 / seeds as f64).collect();
    let lo = rates.iter().cloned().fold(1.0, f64::min);
    let hi = rates.iter().cloned().fold(0.0, f64::max);
    check(
        rates.iter().all(|r| (r - 0.5).abs() <= TOL_PA),
        format!("per-output flip rate in [{lo:.3}, {hi:.3}] over {seeds} seeds"),
    )
}

fn main() {
    let runs = link_runs();
    let criteria: Vec<Criterion> = vec![
        ("1 entropy point value", Box::new(c1_entropy)),
        ("2 B92 sifting efficiency", Box::new(c2_sifting_efficiency)),
        (
            "3 rate reproduction",
            Box::new(|| {
                runs.as_ref()
                    .map_err(Clone::clone)
                    .and_then(|r| c3_rates(r))
            }),
        ),
        (
            "4 BER decomposition",
            Box::new(|| runs.as_ref().map_err(Clone::clone).and_then(|r| c4_ber(r))),
        ),
        ("5 sample key fixture", Box::new(c5_sample_key)),
        ("6 reconciliation", Box::new(c6_reconciliation)),
        ("7 yield optimum", Box::new(c7_optimum)),
        ("8 no-yield thresholds", Box::new(c8_no_yield)),
        ("9 end-to-end determinism", Box::new(c9_determinism)),
        ("10 PA avalanche", Box::new(c10_pa_avalanche)),
    ];
    let mut failed = 0;
    for (name, f) in &criteria {
        let t = Instant::now();
        let (status, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "criterion {name}: {status} ({detail}) [{:.2} s]",
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
