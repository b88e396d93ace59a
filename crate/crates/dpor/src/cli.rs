//! Command implementations behind the `dpor` binary.

use std::fs;
use std::io::Write as _;
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use clap::{Args, Parser, Subcommand};
use dpor_core::auditor::audit;
use dpor_core::block::WriteRecord;
use dpor_core::client::ClientState;
use dpor_core::extractor::{extract_all, ExtractConfig};
use dpor_core::params::setup;
use dpor_core::protocol::{Request, Response, ServerLink};
use dpor_core::server::{AdversaryMode, Server};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::json;

use crate::bench::{self, BenchSpec};
use crate::config::{Config, ConfigError};
use crate::files::{FileError, Kind, Store};
use crate::transport::{serve, FrameTransport, Link, Loopback, TcpTransport};

#[derive(Debug, Parser)]
#[command(name = "dpor", about = "Dynamic proofs of retrievability: client, server, auditor and extractor")]
pub struct Cli {
    /// key=value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Parameter profile (`toy` or `paper`); overrides the config.
    #[arg(long, global = true)]
    pub params: Option<String>,
    /// State directory for keys and the local server snapshot.
    #[arg(long, global = true)]
    pub dir: Option<String>,
    /// Talk to a `dpor serve` instance instead of the local snapshot.
    #[arg(long, global = true)]
    pub server: Option<String>,
    /// Fixed RNG seed, for reproducible runs.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate system parameters and the client's secret key.
    Keygen {
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        m: Option<usize>,
    },
    /// Tag a file and upload it.
    Init {
        #[arg(long)]
        file: PathBuf,
    },
    /// Authenticated read of one block, or of the whole file.
    Read {
        #[arg(long)]
        index: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One write: exactly one of --modify, --insert, --delete.
    Write(WriteArgs),
    /// Public audit against the published counter statement.
    Audit {
        #[arg(long)]
        per_level: Option<usize>,
        #[arg(long, default_value_t = 1)]
        trials: usize,
    },
    /// Reconstruct the latest file through audits alone.
    Extract {
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON-lines report of per-structure attempts and ranks.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        max_attempts_extra: Option<usize>,
    },
    /// Switch the local server into an adversary mode.
    Attack {
        #[arg(long)]
        mode: String,
    },
    /// Measure read/write/audit bytes for several n.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "64,4096")]
        n: Vec<u64>,
        #[arg(long)]
        per_level: Option<usize>,
        #[arg(long, default_value_t = 3)]
        trials: usize,
        /// Writes per n (default: one full cycle of n).
        #[arg(long)]
        writes: Option<u64>,
        #[arg(long)]
        json: bool,
    },
    /// Serve the snapshot over TCP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        #[arg(long)]
        mode: Option<String>,
        /// Exit after this many connections.
        #[arg(long)]
        max_connections: Option<usize>,
    },
}

#[derive(Debug, Args)]
#[group(skip)]
#[command(group(clap::ArgGroup::new("op").required(true).args(["modify", "insert", "delete"])))]
pub struct WriteArgs {
    #[arg(long)]
    pub modify: Option<u64>,
    #[arg(long)]
    pub insert: Option<u64>,
    #[arg(long)]
    pub delete: Option<u64>,
    /// Payload file for --modify / --insert.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Verification(String),
    #[error("{0}")]
    Protocol(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Verification(_) => 2,
            CliError::Protocol(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Verification(_) => "verification",
            CliError::Protocol(_) => "protocol",
        }
    }

    /// One JSON object on one line.
    pub fn machine_line(&self) -> String {
        json!({ "error": self.kind(), "exit": self.exit_code(), "message": self.to_string() }).to_string()
    }
}

impl From<dpor_core::Error> for CliError {
    fn from(e: dpor_core::Error) -> Self {
        use dpor_core::Error as E;
        match e {
            E::Verification(_) | E::Signature | E::Extraction(_) => CliError::Verification(e.to_string()),
            E::Protocol(_) | E::Decode(_) => CliError::Protocol(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<FileError> for CliError {
    fn from(e: FileError) -> Self {
        match e {
            FileError::Io { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Protocol(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn io_usage(what: &str) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Usage(format!("{what}: {e}"))
}

/// What a command prints on success.
#[derive(Debug, Default)]
pub struct Output {
    pub stdout: Vec<u8>,
}

impl Output {
    fn line(&mut self, s: impl AsRef<str>) {
        self.stdout.extend_from_slice(s.as_ref().as_bytes());
        self.stdout.push(b'\n');
    }
}

pub fn resolve_config(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(p) = &cli.params {
        cfg.set("profile", p)?;
    }
    if let Some(d) = &cli.dir {
        cfg.dir = d.clone();
    }
    if let Some(s) = &cli.server {
        cfg.server = Some(s.clone());
    }
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    Ok(cfg)
}

fn rng_for(cfg: &Config) -> ChaCha20Rng {
    match cfg.seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    }
}

enum Transport {
    Local(Loopback),
    Remote(TcpTransport),
}

impl FrameTransport for Transport {
    fn exchange(&mut self, frame: &[u8]) -> dpor_core::Result<Vec<u8>> {
        match self {
            Transport::Local(l) => l.exchange(frame),
            Transport::Remote(t) => t.exchange(frame),
        }
    }
}

/// A link to the server plus the knowledge of where to persist it.
struct Session {
    link: Link<Transport>,
    store: Store,
}

impl Session {
    fn open(cfg: &Config, store: &Store, seg_width: usize, fresh: bool) -> Result<Session, CliError> {
        let transport = match &cfg.server {
            Some(addr) => Transport::Remote(TcpTransport::connect(addr.as_str())?),
            None if fresh => Transport::Local(Loopback::default()),
            None => Transport::Local(Loopback::new(store.snapshot()?)),
        };
        Ok(Session { link: Link::new(transport, seg_width), store: store.clone() })
    }

    /// Persists the local snapshot; a remote server persists itself.
    fn close(self) -> Result<(), CliError> {
        if let Transport::Local(l) = &self.link.transport {
            if let Some(server) = l.server() {
                self.store.save_snapshot(server)?;
            }
        }
        Ok(())
    }
}

pub fn run(cli: &Cli) -> Result<Output, CliError> {
    let cfg = resolve_config(cli)?;
    let store = Store::new(&cfg.dir);
    let mut out = Output::default();
    match &cli.command {
        Command::Keygen { n, m } => {
            let n = n.unwrap_or(cfg.n);
            let m = m.unwrap_or(cfg.m);
            let mut rng = rng_for(&cfg);
            let (params, secret) = setup(&mut rng, cfg.profile, n, m, cfg.sig_scheme, Default::default())?;
            fs::create_dir_all(&store.dir).map_err(io_usage("create state directory"))?;
            store.save(Kind::Params, &params, 0)?;
            store.save(Kind::Secret, &secret, 0)?;
            out.line(format!(
                "fid={} n={} m={} block_bytes={} profile={}",
                hex::encode(params.fid),
                params.n,
                params.m(),
                params.block_bytes(),
                cfg.profile_name
            ));
        }
        Command::Init { file } => {
            let params = store.params()?;
            let secret = store.secret()?;
            let data = fs::read(file).map_err(io_usage("read input file"))?;
            let (client, upload) = ClientState::init(params.clone(), secret, &data)?;
            let mut session = Session::open(&cfg, &store, params.segment_width(), true)?;
            match session.link.call(&Request::Init(upload))?.into_result()? {
                Response::Digest(root) if root == client.root => {}
                Response::Digest(_) => return Err(CliError::Verification("server root differs after init".into())),
                other => return Err(CliError::Protocol(format!("unexpected response {:#04x}", other.frame_type()))),
            }
            session.close()?;
            store.save_client(&client)?;
            store.save_statement(&client.statement()?)?;
            out.line(format!("blocks={} root={}", client.len(), hex::encode(client.root)));
        }
        Command::Read { index, out: path } => {
            let client = store.client()?;
            let mut session = Session::open(&cfg, &store, client.params.segment_width(), false)?;
            let data = match index {
                Some(i) => client.read(&mut session.link, *i)?,
                None => client.read_file(&mut session.link)?,
            };
            match path {
                Some(p) => fs::write(p, &data).map_err(io_usage("write output"))?,
                None => out.stdout.extend_from_slice(&data),
            }
        }
        Command::Write(args) => {
            let mut client = store.client()?;
            let payload = || -> Result<Vec<u8>, CliError> {
                let p = args.data.as_ref().ok_or_else(|| CliError::Usage("--data is required".into()))?;
                fs::read(p).map_err(io_usage("read --data"))
            };
            let record = match (args.modify, args.insert, args.delete) {
                (Some(i), None, None) => WriteRecord::modify(i, payload()?),
                (None, Some(i), None) => WriteRecord::insert(i, payload()?),
                (None, None, Some(i)) => WriteRecord::delete(i),
                _ => return Err(CliError::Usage("give exactly one of --modify, --insert, --delete".into())),
            };
            let mut session = Session::open(&cfg, &store, client.params.segment_width(), false)?;
            let result = client.write(&mut session.link, &record);
            // the server may have changed even if the client aborted
            session.close()?;
            let statement = result?;
            store.save_client(&client)?;
            store.save_statement(&statement)?;
            out.line(format!("counter={} root={}", client.counter, hex::encode(client.root)));
        }
        Command::Audit { per_level, trials } => {
            let params = store.params()?;
            let statement = store.statement()?;
            let c = per_level.unwrap_or(cfg.per_level);
            let mut session = Session::open(&cfg, &store, params.segment_width(), false)?;
            let mut rng = rng_for(&cfg);
            let mut failed = 0;
            for t in 0..*trials {
                let o = audit(&params, &statement, c, &mut session.link, &mut rng)?;
                failed += usize::from(!o.passed);
                out.line(
                    json!({ "trial": t, "counter": statement.counter, "passed": o.passed, "vacuous": o.vacuous, "reason": o.reason })
                        .to_string(),
                );
            }
            if failed > 0 {
                // the passing lines are still useful to the caller
                std::io::stdout().write_all(&out.stdout).ok();
                return Err(CliError::Verification(format!("{failed} of {trials} audits failed")));
            }
        }
        Command::Extract { out: path, report, max_attempts_extra } => {
            let params = store.params()?;
            let statement = store.statement()?;
            let mut session = Session::open(&cfg, &store, params.segment_width(), false)?;
            let config = ExtractConfig {
                extra_attempts: max_attempts_extra.unwrap_or(cfg.extra_attempts),
                max_consecutive_failures: cfg.max_consecutive_failures,
            };
            let mut rng = rng_for(&cfg);
            let rep = extract_all(&params, &mut session.link, &statement, &config, &mut rng)?;
            let lines: Vec<String> = rep
                .structures
                .iter()
                .map(|s| {
                    json!({
                        "structure": s.structure.to_string(),
                        "positions": s.positions,
                        "good": s.good,
                        "probes": s.probes,
                        "attempts": s.attempts,
                        "rank": s.rank,
                        "ok": s.error.is_none(),
                        "error": s.error,
                    })
                    .to_string()
                })
                .collect();
            match report {
                Some(p) => fs::write(p, lines.join("\n") + "\n").map_err(io_usage("write report"))?,
                None => lines.iter().for_each(|l| out.line(l)),
            }
            let Some(file) = rep.file else {
                std::io::stdout().write_all(&out.stdout).ok();
                let names: Vec<String> = rep.failed().iter().map(|s| s.to_string()).collect();
                return Err(CliError::Verification(format!("extraction failed for {}", names.join(", "))));
            };
            match path {
                Some(p) => fs::write(p, &file).map_err(io_usage("write output"))?,
                None => out.stdout.extend_from_slice(&file),
            }
        }
        Command::Attack { mode } => {
            if cfg.server.is_some() {
                return Err(CliError::Usage("attack applies to the local snapshot; use `serve --mode` remotely".into()));
            }
            let mode = AdversaryMode::parse(mode)?;
            let mut server = store.snapshot()?;
            server.set_mode(mode);
            store.save_snapshot(&server)?;
            out.line(format!("mode={:?} wiped={}", server.mode(), server.deleted().len()));
        }
        Command::Bench { n, per_level, trials, writes, json } => {
            let spec = BenchSpec {
                profile: cfg.profile,
                m: cfg.m,
                per_level: per_level.unwrap_or(cfg.per_level),
                audit_trials: *trials,
                writes: *writes,
                seed: cfg.seed.unwrap_or(1),
            };
            let rows = bench::run(n, &spec)?;
            if *json {
                for r in &rows {
                    out.line(serde_json::to_string(r).expect("serializable row"));
                }
            } else {
                out.stdout.extend_from_slice(bench::render(&rows).as_bytes());
            }
        }
        Command::Serve { listen, mode, max_connections } => {
            let mut server: Option<Server> = if store.exists(Kind::Snapshot) { Some(store.snapshot()?) } else { None };
            if let Some(m) = mode {
                let m = AdversaryMode::parse(m)?;
                match server.as_mut() {
                    Some(s) => s.set_mode(m),
                    None => return Err(CliError::Usage("--mode needs an existing snapshot".into())),
                }
            }
            let listener = TcpListener::bind(listen).map_err(io_usage("bind"))?;
            eprintln!("listening on {}", listener.local_addr().map_err(io_usage("bind"))?);
            let persist = store.clone();
            let hook = Arc::new(move |s: &Server| {
                if let Err(e) = persist.save_snapshot(s) {
                    eprintln!("snapshot save failed: {e}");
                }
            });
            serve(listener, Arc::new(RwLock::new(server)), *max_connections, hook).map_err(io_usage("serve"))?;
        }
    }
    Ok(out)
}

/// Parses argv and runs; returns the process exit code.
pub fn main_with_args<I: IntoIterator<Item = String>>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(o) => {
            std::io::stdout().write_all(&o.stdout).ok();
            0
        }
        Err(e) => {
            eprintln!("{}", e.machine_line());
            e.exit_code()
        }
    }
}
