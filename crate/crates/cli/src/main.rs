//! `compactchain` command-line tool. Every command writes CSV with a header
//! row; failures print a single `error: <kind>: <message>` line.

mod config;
mod store;

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use compactchain::bench::{boneh_fixture, compact_fixture, mean_time, Operation, Scheme};
use compactchain::chain::{replay, sha256, ChainError, ChainState, Protocol};
use compactchain::netsim::{self, NetsimError};
use compactchain::rsa_group::{GroupError, GroupParams};
use compactchain::workload::{AttackKind, BlockReport, Injection, Simulation, WorkloadError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rug::Integer;
use thiserror::Error;

use config::{KeyValues, NetsimRun, RunConfig};
use store::Store;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {path}: {message}")]
    Io { path: String, message: String },
    #[error("group: {0}")]
    Group(#[from] GroupError),
    #[error("chain: {0}")]
    Chain(#[from] ChainError),
    #[error("workload: {0}")]
    Workload(#[from] WorkloadError),
    #[error("netsim: {0}")]
    Netsim(#[from] NetsimError),
    #[error("verify: {0}")]
    Verify(String),
    #[error("double-spend accepted: {0}")]
    Accepted(String),
}

impl CliError {
    pub fn io(path: &Path, e: io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), message: e.to_string() }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "compactchain", version, about = "Stateless UTXO chain on RSA accumulators")]
struct Cli {
    /// Size of the worker pool used by parallel steps.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a group parameter file.
    Setup(SetupArgs),
    #[command(subcommand)]
    Chain(ChainCommand),
    #[command(subcommand)]
    Wallet(WalletCommand),
    /// Time commitment update, verification or witness update over a sweep of m.
    Bench(BenchArgs),
    #[command(subcommand)]
    Netsim(NetsimCommand),
}

#[derive(Args)]
#[group(skip)]
#[command(group(ArgGroup::new("source").required(true).args(["bits", "modulus", "rsa2048", "inspect"])))]
struct SetupArgs {
    /// Generate a fresh modulus of this size from two random primes.
    #[arg(long)]
    bits: Option<u32>,
    /// Text file holding the modulus in decimal or 0x-prefixed hex.
    #[arg(long)]
    modulus: Option<PathBuf>,
    /// Use the RSA-2048 challenge modulus.
    #[arg(long)]
    rsa2048: bool,
    /// Describe an existing parameter file instead of writing one.
    #[arg(long)]
    inspect: Option<PathBuf>,
    #[arg(long)]
    generator: Option<String>,
    #[arg(long)]
    prime_bits: Option<u16>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, required_unless_present = "inspect")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ChainCommand {
    /// Create a store holding only the genesis header.
    Init {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Extend the stored chain with synthetic blocks.
    Append {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        blocks: Option<u32>,
        /// Replayed spends to try against the validator along the way.
        #[arg(long, default_value_t = 0)]
        double_spends: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay the stored chain and check it against its records.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
    Stats {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum WalletCommand {
    /// Run the wallet population forward in memory and attack the validator
    /// with replayed spends. The store is left unchanged.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        blocks: Option<u32>,
        #[arg(long, default_value_t = 10)]
        double_spends: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    scheme: Scheme,
    #[arg(long, default_value = "update")]
    op: Operation,
    #[arg(long, value_delimiter = ',', default_value = "100,200,400,800")]
    ms: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    /// Parameter file; the RSA-2048 modulus when absent.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum NetsimCommand {
    /// Propagation latency for each scheme and seed.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Maximum TPS per scheme from measured consensus latency.
    Tps {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long, default_value_t = 500)]
        tx_per_block: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Reference transaction-verification and commitment-update latencies for
/// 500 transactions, in seconds.
const REFERENCE_LATENCIES: [(&str, f64, f64); 3] =
    [("boneh", 0.193, 235.62), ("minichain", 0.306, 0.97), ("compactchain", 0.303, 0.99)];

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first: Vec<&str> = text.lines().map(str::trim).take_while(|l| !l.is_empty()).collect();
            let line = first.join(" ");
            return fail(CliError::Usage(line.trim_start_matches("error: ").to_string()));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

fn fail(e: CliError) -> ExitCode {
    let msg = e.to_string().replace(['\n', '\r'], " ");
    eprintln!("error: {msg}");
    ExitCode::FAILURE
}

fn run(cli: Cli) -> Result<()> {
    let workers = cli.workers;
    match cli.command {
        Command::Setup(args) => cmd_setup(args),
        Command::Chain(c) => cmd_chain(c, workers),
        Command::Wallet(WalletCommand::Simulate { config, blocks, double_spends, out }) => {
            cmd_wallet_simulate(&config, blocks, double_spends, out.as_deref(), workers)
        }
        Command::Bench(args) => cmd_bench(args, workers),
        Command::Netsim(c) => cmd_netsim(c, workers),
    }
}

fn init_pool(workers: Option<usize>) -> Result<()> {
    if let Some(n) = workers {
        if n == 0 {
            return Err(CliError::Usage("workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(io::BufWriter::new(std::fs::File::create(p).map_err(|e| CliError::io(p, e))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit(w: &mut dyn Write, line: std::fmt::Arguments) -> Result<()> {
    writeln!(w, "{line}").map_err(|e| CliError::io(Path::new("<output>"), e))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_integer(text: &str) -> Result<Integer> {
    let t = text.trim();
    let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(h) => Integer::from_str_radix(h, 16),
        None => Integer::from_str_radix(t, 10),
    };
    parsed.map_err(|_| CliError::Usage(format!("not an integer: {t:?}")))
}

fn load_params(path: &Path) -> Result<GroupParams> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(GroupParams::from_bytes(&bytes)?)
}

fn cmd_setup(args: SetupArgs) -> Result<()> {
    let params = if let Some(path) = &args.inspect {
        load_params(path)?
    } else {
        let base = if let Some(bits) = args.bits {
            GroupParams::generate_dev(bits, &mut ChaCha8Rng::seed_from_u64(args.seed))?
        } else if let Some(path) = &args.modulus {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            GroupParams::with_modulus(parse_integer(&text)?)?
        } else {
            GroupParams::rsa2048()
        };
        let with_g = match &args.generator {
            Some(g) => GroupParams::new(base.modulus().clone(), parse_integer(g)?)?,
            None => base,
        };
        let params = match args.prime_bits {
            Some(b) => with_g.with_prime_bits(b)?,
            None => with_g,
        };
        let out = args.out.as_deref().expect("required by clap");
        std::fs::write(out, params.to_bytes()).map_err(|e| CliError::io(out, e))?;
        params
    };
    let bytes = params.to_bytes();
    let mut w = sink(None)?;
    emit(&mut w, format_args!("modulus_bits,prime_bits,file_bytes,fingerprint"))?;
    emit(
        &mut w,
        format_args!("{},{},{},{}", params.modulus_bits(), params.prime_bits(), bytes.len(), hex(&sha256(&[&bytes])[..8])),
    )
}

fn run_protocol(cfg: &RunConfig) -> Result<Protocol> {
    Ok(Protocol::new(load_params(&cfg.params)?).with_cache_depth(cfg.cache_depth))
}

fn load_run(config: &Path, workers: Option<usize>) -> Result<(RunConfig, Protocol, Store)> {
    let cfg = RunConfig::load(config)?;
    init_pool(workers.or(cfg.workers))?;
    let proto = run_protocol(&cfg)?;
    let store = Store::new(&cfg.store);
    Ok((cfg, proto, store))
}

fn cmd_chain(c: ChainCommand, workers: Option<usize>) -> Result<()> {
    match c {
        ChainCommand::Init { config, force } => {
            let (cfg, proto, store) = load_run(&config, workers)?;
            if store.exists() && !force {
                return Err(CliError::Usage(format!("store {} already exists", cfg.store.display())));
            }
            let state = ChainState::genesis(proto);
            let sim = Simulation::new(state, cfg.workload.clone());
            let (state, wallets, _) = sim.into_parts();
            store.init(&state, &wallets)?;
            let mut w = sink(None)?;
            emit(&mut w, format_args!("tip_height,header_bytes,wallets"))?;
            let len = std::fs::metadata(store.headers_path()).map_err(|e| CliError::io(&store.headers_path(), e))?.len();
            emit(&mut w, format_args!("0,{len},{}", wallets.len()))
        }
        ChainCommand::Append { config, blocks, double_spends, out } => {
            let (cfg, proto, store) = load_run(&config, workers)?;
            let state = store.load_state(proto)?;
            let wallets = store.load_wallets(&state)?;
            let mut sim = Simulation::resume(state, wallets, cfg.workload.clone());
            let mut w = sink(out.as_deref())?;
            emit(&mut w, format_args!("height,update_seconds,verify_seconds,block_bytes,proof_bytes"))?;
            drive(&mut sim, blocks.unwrap_or(cfg.blocks), double_spends, &mut |r| block_row(&mut w, r), &mut |i| {
                eprintln!("rejected,{}", injection_fields(i));
                Ok(())
            })?;
            w.flush().map_err(|e| CliError::io(Path::new("<output>"), e))?;
            let (state, wallets, bodies) = sim.into_parts();
            store.append(&state, &wallets, &bodies)
        }
        ChainCommand::Verify { config } => {
            let (_, proto, store) = load_run(&config, workers)?;
            let params = proto.params();
            let headers = store.load_headers(params)?;
            let bodies = store.load_bodies(params)?;
            let cache = replay(&proto, &headers, &bodies)?;
            if cache != store.load_cache(&proto)? {
                return Err(CliError::Verify("stored STXO cache differs from replay".into()));
            }
            let state = ChainState::from_parts(proto, headers, cache);
            let wallets = store.load_wallets(&state)?;
            let mut w = sink(None)?;
            emit(&mut w, format_args!("tip_height,headers,body_records,cache_buckets,wallets,status"))?;
            emit(
                &mut w,
                format_args!(
                    "{},{},{},{},{},ok",
                    state.tip_height(),
                    state.headers().len(),
                    bodies.len(),
                    state.cache().bucket_count(),
                    wallets.len()
                ),
            )
        }
        ChainCommand::Stats { config } => {
            let (_, proto, store) = load_run(&config, workers)?;
            let state = store.load_state(proto)?;
            let wallets = store.load_wallets(&state)?;
            let params = state.protocol().params();
            let bodies = store.load_bodies(params)?;
            let header_bytes = state.headers().to_bytes(params).len();
            let cache_primes: usize =
                state.cache().heights().map(|h| state.cache().bucket(h).map_or(0, |b| b.len())).sum();
            let unspent: usize = wallets.iter().map(|w| w.unspent().count()).sum();
            let balance: u64 = wallets.iter().map(|w| w.balance()).sum();
            let mut w = sink(None)?;
            emit(
                &mut w,
                format_args!(
                    "tip_height,headers,header_bytes,cache_buckets,cache_primes,body_records,wallets,unspent_coins,balance"
                ),
            )?;
            emit(
                &mut w,
                format_args!(
                    "{},{},{header_bytes},{},{cache_primes},{},{},{unspent},{balance}",
                    state.tip_height(),
                    state.headers().len(),
                    state.cache().bucket_count(),
                    bodies.len(),
                    wallets.len()
                ),
            )
        }
    }
}

fn block_row(w: &mut dyn Write, r: &BlockReport) -> Result<()> {
    emit(
        w,
        format_args!(
            "{},{:.6},{:.6},{},{}",
            r.height, r.update_seconds, r.verify_seconds, r.block_bytes, r.proof_bytes
        ),
    )
}

fn kind_name(k: AttackKind) -> &'static str {
    match k {
        AttackKind::CacheHit => "cache-hit",
        AttackKind::StaleWitness => "stale-witness",
    }
}

fn csv_safe(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

fn injection_fields(i: &Injection) -> String {
    let standalone = match &i.standalone {
        Ok(true) => "valid".to_string(),
        Ok(false) => "invalid".to_string(),
        Err(e) => csv_safe(&e.to_string()),
    };
    let block = i.block_error.as_ref().map_or("accepted".to_string(), |e| csv_safe(&e.to_string()));
    format!("{},{},{},{},{standalone},{block}", kind_name(i.kind), i.witness_height, i.spent_height, i.tip)
}

/// Steps `blocks` blocks, spreading `double_spends` replay attempts evenly
/// and alternating between in-window and stale witnesses. Returns the number
/// of attempts made.
fn drive(
    sim: &mut Simulation,
    blocks: u32,
    double_spends: u32,
    on_block: &mut dyn FnMut(&BlockReport) -> Result<()>,
    on_injection: &mut dyn FnMut(&Injection) -> Result<()>,
) -> Result<u32> {
    let mut done = 0u32;
    for i in 1..=blocks {
        on_block(&sim.step()?)?;
        let target = (double_spends as u64 * i as u64 / blocks as u64) as u32;
        while done < target {
            let first = if done % 2 == 0 { AttackKind::CacheHit } else { AttackKind::StaleWitness };
            let second = if first == AttackKind::CacheHit { AttackKind::StaleWitness } else { AttackKind::CacheHit };
            let Some(inj) = (match sim.inject(first)? {
                Some(x) => Some(x),
                None => sim.inject(second)?,
            }) else {
                break;
            };
            if !inj.rejected() {
                return Err(CliError::Accepted(injection_fields(&inj)));
            }
            on_injection(&inj)?;
            done += 1;
        }
    }
    Ok(done)
}

fn cmd_wallet_simulate(config: &Path, blocks: Option<u32>, double_spends: u32, out: Option<&Path>, workers: Option<usize>) -> Result<()> {
    let (cfg, proto, store) = load_run(config, workers)?;
    let state = store.load_state(proto)?;
    let wallets = store.load_wallets(&state)?;
    let blocks = blocks.unwrap_or(cfg.blocks);
    if blocks == 0 && double_spends > 0 {
        return Err(CliError::Usage("double spends need at least one block".into()));
    }
    let mut sim = Simulation::resume(state, wallets, cfg.workload.clone());
    let mut w = sink(out)?;
    emit(&mut w, format_args!("kind,witness_height,spent_height,tip,standalone,block"))?;
    let attempts = drive(&mut sim, blocks, double_spends, &mut |_| Ok(()), &mut |i| {
        emit(&mut w, format_args!("{}", injection_fields(i)))
    })?;
    w.flush().map_err(|e| CliError::io(Path::new("<output>"), e))?;
    let coins = sim.check_wallets_at_tip()?;
    eprintln!(
        "tip {}: {attempts}/{double_spends} double-spends rejected, {coins} wallet witnesses verify",
        sim.state().tip_height()
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs, workers: Option<usize>) -> Result<()> {
    init_pool(workers)?;
    if args.reps == 0 || args.ms.contains(&0) {
        return Err(CliError::Usage("reps and every m must be at least 1".into()));
    }
    let params = match &args.params {
        Some(p) => load_params(p)?,
        None => GroupParams::rsa2048(),
    };
    let proto = Protocol::new(params);
    let threads = rayon::current_num_threads();
    let mut w = sink(args.out.as_deref())?;
    emit(&mut w, format_args!("scheme,m,seconds,workers"))?;
    for &m in &args.ms {
        let seed = args.seed ^ m as u64;
        let secs = match args.scheme {
            Scheme::Compact => {
                let fx = compact_fixture(&proto, m, seed);
                mean_time(args.reps, || fx.run(args.op))
            }
            Scheme::Boneh => {
                let fx = boneh_fixture(&proto, m, seed);
                mean_time(args.reps, || fx.run(args.op))
            }
        };
        emit(&mut w, format_args!("{},{m},{secs:.6},{threads}", args.scheme.name()))?;
        w.flush().map_err(|e| CliError::io(Path::new("<output>"), e))?;
    }
    Ok(())
}

fn netsim_run(config: Option<&Path>, seeds: Option<u64>) -> Result<NetsimRun> {
    let kv = match config {
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::default(),
    };
    let mut run = NetsimRun::from_key_values(kv)?;
    if let Some(n) = seeds {
        if n == 0 {
            return Err(CliError::Usage("seeds must be at least 1".into()));
        }
        run.seeds = (run.base.rng_seed..run.base.rng_seed + n).collect();
    }
    Ok(run)
}

fn cmd_netsim(c: NetsimCommand, workers: Option<usize>) -> Result<()> {
    init_pool(workers)?;
    match c {
        NetsimCommand::Run { config, seeds, out } => {
            let run = netsim_run(config.as_deref(), seeds)?;
            let rows = netsim::sweep(&run.base, &run.schemes, &run.seeds)?;
            let mut w = sink(out.as_deref())?;
            emit(&mut w, format_args!("seed,scheme,payload_bytes,consensus_latency_s,full_coverage_s"))?;
            for r in rows {
                emit(
                    &mut w,
                    format_args!("{},{},{},{:.6},{:.6}", r.seed, r.scheme, r.payload_bytes, r.consensus_latency, r.full_coverage),
                )?;
            }
            w.flush().map_err(|e| CliError::io(Path::new("<output>"), e))
        }
        NetsimCommand::Tps { config, seeds, tx_per_block, out } => {
            let run = netsim_run(config.as_deref(), seeds)?;
            let rows = netsim::sweep(&run.base, &run.schemes, &run.seeds)?;
            let mut w = sink(out.as_deref())?;
            emit(&mut w, format_args!("scheme,tx_verif_s,commit_update_s,consensus_s,max_tps"))?;
            for s in &run.schemes {
                let lat: Vec<f64> = rows.iter().filter(|r| r.scheme == s.name).map(|r| r.consensus_latency).collect();
                let consensus = lat.iter().sum::<f64>() / lat.len() as f64;
                let (verif, update) = REFERENCE_LATENCIES
                    .iter()
                    .find(|(n, _, _)| *n == s.name)
                    .map(|&(_, v, u)| (v, u))
                    .unwrap_or((s.validation_seconds, 0.0));
                let tps = netsim::max_tps(verif, update, consensus, tx_per_block);
                emit(&mut w, format_args!("{},{verif:.3},{update:.3},{consensus:.6},{tps:.2}", s.name))?;
            }
            w.flush().map_err(|e| CliError::io(Path::new("<output>"), e))
        }
    }
}
