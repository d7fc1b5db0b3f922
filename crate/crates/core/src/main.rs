use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};

use cvqkd::config::{RunConfig, TransportKind};
use cvqkd::ldpc::Codebook;
use cvqkd::session::{run_loopback, run_party, write_key_file, PartyOutcome, Role, TcpTransport};
use cvqkd::simulator::{draw_samples, write_dump, DumpHeader};
use cvqkd::sweep::{run_sweep, write_csv, SweepMode, SweepSpec, SweepVariable};

const EXIT_ERROR: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "cvqkd", version, about = "CV-QKD post-processing and simulation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Alice,
    Bob,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariableArg {
    Samples,
    LossDb,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Session,
    Estimate,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one two-party session.
    Run {
        /// TOML configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory, overriding the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Which party this process plays. `both` runs them in process.
        #[arg(long, value_enum, default_value = "both")]
        role: RoleArg,
    },
    /// Key rate over a grid of sample counts or losses.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        variable: VariableArg,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
        #[arg(long, value_enum, default_value = "session")]
        mode: ModeArg,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// CSV file, appended to if it exists.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a codebook grid.
    Makecodes {
        #[arg(long, value_delimiter = ',', default_value = "32,64,128,256")]
        orders: Vec<usize>,
        /// Lowest rate in percent.
        #[arg(long, default_value_t = 50)]
        rate_min: u16,
        /// Highest rate in percent.
        #[arg(long, default_value_t = 95)]
        rate_max: u16,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Load a codebook and check every code.
    VerifyCodebook {
        dir: PathBuf,
    },
    /// Write simulated measurement dumps for both parties.
    Dump {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        alice: PathBuf,
        #[arg(long)]
        bob: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, String> {
    match path {
        Some(p) => RunConfig::load(p).map_err(|e| e.to_string()),
        None => Ok(RunConfig::default()),
    }
}

fn write_outputs(dir: &Path, o: &PartyOutcome) -> std::io::Result<()> {
    let name = match o.role {
        Role::Alice => "alice",
        Role::Bob => "bob",
    };
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("transcript_{name}.tsv")), o.transcript.to_text())?;
    let ledger = serde_json::json!({
        "lsb_bits": o.ledger.lsb_bits(),
        "syndrome_bits": o.ledger.syndrome_bits(),
        "tail_bits": o.ledger.tail_bits(),
        "confirmation_bits": o.ledger.confirmation_bits(),
        "protocol_overhead_bits": o.ledger.protocol_overhead_bits(),
        "pe_symbols_published": o.ledger.pe_symbols_published(),
        "total_charged_bits": o.ledger.total(),
        "framing_bytes": o.transcript.framing_bytes(),
    });
    std::fs::write(dir.join(format!("ledger_{name}.json")), serde_json::to_string_pretty(&ledger)?)?;
    std::fs::write(dir.join(format!("diagnostics_{name}.json")), serde_json::to_string_pretty(&o.diagnostics)?)?;
    if let Some(r) = &o.key_report {
        std::fs::write(dir.join(format!("key_length_{name}.txt")), r.to_text())?;
    }
    if let Some(k) = o.key() {
        write_key_file(&dir.join(format!("{name}.key")), k).map_err(std::io::Error::other)?;
    }
    Ok(())
}

fn report(outcomes: &[PartyOutcome]) -> ExitCode {
    let mut code = 0u8;
    for o in outcomes {
        match &o.result {
            Ok(k) => println!("{:?}: key {} bits, session {}", o.role, k.bits.len(), hex::encode(k.session_id)),
            Err(a) => {
                println!("{:?}: {}", o.role, a.code.name());
                eprintln!("{:?}: {a}", o.role);
                code = code.max(a.code.exit_code() as u8);
            }
        }
    }
    if outcomes.len() == 2 {
        if let (Some(a), Some(b)) = (outcomes[0].key(), outcomes[1].key()) {
            if a.bits != b.bits {
                eprintln!("keys differ");
                return ExitCode::from(EXIT_ERROR);
            }
        }
    }
    ExitCode::from(code)
}

fn cmd_run(config: Option<PathBuf>, out: Option<PathBuf>, role: RoleArg) -> ExitCode {
    let cfg = match load_config(config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let codebook = match cfg.load_codebook() {
        Ok(b) => Arc::new(b),
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let (alice, bob) = match cfg.parties(codebook) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let out = out.unwrap_or_else(|| cfg.output.dir.clone());
    let source = cfg.sample_source();
    let start = Instant::now();
    let outcomes: Vec<PartyOutcome> = match (cfg.transport.kind, role) {
        (TransportKind::Loopback, RoleArg::Both) => {
            let (a, b) = run_loopback(&alice, &bob, source);
            vec![a, b]
        }
        (TransportKind::Loopback, _) => {
            eprintln!("configuration error: a single role needs the tcp transport");
            return ExitCode::from(EXIT_CONFIG);
        }
        (TransportKind::Tcp, role) => {
            let addr = cfg.transport.addr.clone();
            let listener = match role {
                RoleArg::Alice | RoleArg::Both => match std::net::TcpListener::bind(&addr) {
                    Ok(l) => Some(l),
                    Err(e) => {
                        eprintln!("cannot listen on {addr}: {e}");
                        return ExitCode::from(EXIT_ERROR);
                    }
                },
                RoleArg::Bob => None,
            };
            let run_bob = {
                let addr = addr.clone();
                let source = source.clone();
                move || match TcpTransport::connect(addr.as_str(), Duration::from_secs(30)) {
                    Ok(t) => Ok(run_party(&bob, source.as_ref(), t)),
                    Err(e) => Err(e.to_string()),
                }
            };
            let run_alice = |l: std::net::TcpListener| match TcpTransport::accept(&l) {
                Ok(t) => Ok(run_party(&alice, source.as_ref(), t)),
                Err(e) => Err(e.to_string()),
            };
            let res: Result<Vec<PartyOutcome>, String> = match role {
                RoleArg::Alice => run_alice(listener.unwrap()).map(|a| vec![a]),
                RoleArg::Bob => run_bob().map(|b| vec![b]),
                RoleArg::Both => {
                    let h = std::thread::spawn(run_bob);
                    let a = run_alice(listener.unwrap());
                    let b = h.join().expect("bob thread panicked");
                    a.and_then(|a| b.map(|b| vec![a, b]))
                }
            };
            match res {
                Ok(v) => v,
                Err(e) => {
                    eprintln!("transport error: {e}");
                    return ExitCode::from(EXIT_ERROR);
                }
            }
        }
    };
    for o in &outcomes {
        if let Err(e) = write_outputs(&out, o) {
            eprintln!("cannot write outputs to {}: {e}", out.display());
            return ExitCode::from(EXIT_ERROR);
        }
    }
    eprintln!("finished in {:.1} s", start.elapsed().as_secs_f64());
    report(&outcomes)
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    config: Option<PathBuf>,
    variable: VariableArg,
    values: Vec<f64>,
    repetitions: usize,
    mode: ModeArg,
    jobs: usize,
    out: PathBuf,
) -> ExitCode {
    let base = match load_config(config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mode = match mode {
        ModeArg::Session => SweepMode::Session,
        ModeArg::Estimate => SweepMode::Estimate,
    };
    let codebook = match mode {
        SweepMode::Session => match base.load_codebook() {
            Ok(b) => Some(Arc::new(b)),
            Err(e) => {
                eprintln!("configuration error: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
        },
        SweepMode::Estimate => base.load_codebook().ok().map(Arc::new),
    };
    let spec = SweepSpec {
        variable: match variable {
            VariableArg::Samples => SweepVariable::Samples,
            VariableArg::LossDb => SweepVariable::LossDb,
        },
        values,
        repetitions,
        mode,
        base,
        jobs,
    };
    let rows = match run_sweep(&spec, codebook) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("sweep error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    for r in &rows {
        println!("x={} rep={} rate={:.6} ell={} {}", r.x, r.repetition, r.key_rate, r.key_length, r.abort);
    }
    match write_csv(&out, &rows) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cannot write {}: {e}", out.display());
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn cmd_makecodes(orders: Vec<usize>, rate_min: u16, rate_max: u16, n: usize, seed: u64, out: PathBuf) -> ExitCode {
    if rate_min > rate_max || rate_max >= 100 {
        eprintln!("rates must satisfy rate_min <= rate_max < 100");
        return ExitCode::from(EXIT_CONFIG);
    }
    let rates: Vec<u16> = (rate_min..=rate_max).collect();
    let start = Instant::now();
    let (book, failed) = Codebook::generate(&orders, &rates, n, seed);
    for (key, e) in &failed {
        eprintln!("infeasible: GF({}) rate {}%: {e}", key.order, key.rate_percent);
    }
    if let Err(e) = book.store(&out) {
        eprintln!("cannot write codebook: {e}");
        return ExitCode::from(EXIT_ERROR);
    }
    println!(
        "wrote {} codes to {} in {:.1} s (digest {})",
        book.len(),
        out.display(),
        start.elapsed().as_secs_f64(),
        hex::encode(book.digest())
    );
    ExitCode::SUCCESS
}

fn cmd_verify(dir: PathBuf) -> ExitCode {
    let book = match Codebook::load(&dir) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("invalid codebook: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    };
    let mut bad = 0;
    for (key, h) in book.iter() {
        if let Err(e) = h.check_invariants() {
            eprintln!("GF({}) rate {}%: {e}", key.order, key.rate_percent);
            bad += 1;
        }
    }
    println!("{} codes, {bad} invalid, digest {}", book.len(), hex::encode(book.digest()));
    if bad == 0 && !book.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_ERROR)
    }
}

fn cmd_dump(config: Option<PathBuf>, alice: PathBuf, bob: PathBuf) -> ExitCode {
    let cfg = match load_config(config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let model = cfg.source.model();
    let (mut a, b) = match draw_samples(&model, cfg.slots(), cfg.source.seed_a, cfg.source.seed_b) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("simulation error: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    };
    a.scale(cfg.source.raw_gain);
    let header = |role: &str, gain| DumpHeader {
        format: "cvqkd-dump-v1".into(),
        role: role.into(),
        slots: cfg.slots(),
        model,
        seed_a: cfg.source.seed_a,
        seed_b: cfg.source.seed_b,
        raw_gain: gain,
    };
    let res = write_dump(&alice, &a, &header("alice", cfg.source.raw_gain))
        .and_then(|_| write_dump(&bob, &b, &header("bob", 1.0)));
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cannot write dumps: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().cmd {
        Cmd::Run { config, out, role } => cmd_run(config, out, role),
        Cmd::Sweep { config, variable, values, repetitions, mode, jobs, out } => {
            cmd_sweep(config, variable, values, repetitions, mode, jobs, out)
        }
        Cmd::Makecodes { orders, rate_min, rate_max, n, seed, out } => {
            cmd_makecodes(orders, rate_min, rate_max, n, seed, out)
        }
        Cmd::VerifyCodebook { dir } => cmd_verify(dir),
        Cmd::Dump { config, alice, bob } => cmd_dump(config, alice, bob),
    }
}
