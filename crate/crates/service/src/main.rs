use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anchorledger::anchor::MockChain;
use anchorledger::ledger::{create_genesis, Difficulty, Md5Index};
use anchorledger::{Address, SecretKey};
use anchorledger_service::config::ServiceConfig;
use anchorledger_service::daemon::{key_from_env, Daemon};
use anchorledger_service::ingest::{
    scan, watch, HttpSubmitter, IngestTask, Ingestor, Journal, RetryPolicy, DEFAULT_SOURCE_PREFIX,
};
use anchorledger_service::rpc::mock_rpc_router;
use anchorledger_service::server::ServerHandle;
use anchorledger_service::verify::Verifier;
use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "anchorledger", version, about = "Permissioned data-integrity ledger")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a fresh secret key and its address.
    Keygen,
    /// Create the genesis block for a new network.
    Init {
        /// Variable holding the master node's hex secret key.
        #[arg(long, default_value = "ANCHORLEDGER_NODE_KEY")]
        key_env: String,
        #[arg(long, default_value_t = 4)]
        difficulty: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a node with its API and background loops.
    Node {
        #[arg(long)]
        config: PathBuf,
    },
    /// Hash files and submit them to the asset API.
    Ingest {
        #[command(subcommand)]
        mode: IngestMode,
    },
    /// Hash a local file and check it against the API.
    Verify {
        file: PathBuf,
        #[arg(long, env = "ANCHORLEDGER_API", default_value = "http://127.0.0.1:8080")]
        api: String,
        /// Print only the verdict line.
        #[arg(long)]
        quiet: bool,
    },
    /// Serve an in-memory public chain over JSON-RPC.
    MockChain {
        #[arg(long, default_value = "127.0.0.1:8545")]
        listen: std::net::SocketAddr,
        /// `ADDRESS=WEI`, repeatable.
        #[arg(long)]
        fund: Vec<String>,
        /// Mine a public block this often; 0 mines only on `evm_mine`.
        #[arg(long, default_value_t = 1000)]
        block_time_ms: u64,
    },
}

#[derive(Args, Clone)]
struct IngestOpts {
    #[arg(long, env = "ANCHORLEDGER_API", default_value = "http://127.0.0.1:8080")]
    api: String,
    /// `<network-name>/<connector>` put in front of each absolute path.
    #[arg(long, default_value = DEFAULT_SOURCE_PREFIX)]
    source_prefix: String,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    #[arg(long, default_value = "ingest-journal.jsonl")]
    journal: PathBuf,
    #[arg(long, default_value_t = 1000)]
    initial_backoff_ms: u64,
    #[arg(long, default_value_t = 60_000)]
    max_backoff_ms: u64,
    #[arg(long, default_value_t = 8)]
    max_attempts: u32,
}

#[derive(Subcommand)]
enum IngestMode {
    /// Ingest every file under a directory once.
    Scan {
        dir: PathBuf,
        #[command(flatten)]
        opts: IngestOpts,
    },
    /// Keep ingesting new files as they appear.
    Watch {
        dir: PathBuf,
        #[arg(long, default_value_t = 5)]
        interval_secs: u64,
        #[command(flatten)]
        opts: IngestOpts,
    },
    /// Ingest one file, optionally as derived from a parent asset.
    File {
        path: PathBuf,
        #[arg(long)]
        parent_md5: Option<String>,
        #[command(flatten)]
        opts: IngestOpts,
    },
}

fn ingestor(opts: &IngestOpts) -> Result<Ingestor, String> {
    let submitter = HttpSubmitter::new(&opts.api, Duration::from_secs(30)).map_err(|e| e.to_string())?;
    let journal = Journal::open(&opts.journal).map_err(|e| format!("journal {}: {e}", opts.journal.display()))?;
    let retry = RetryPolicy {
        initial: Duration::from_millis(opts.initial_backoff_ms),
        factor: 2,
        cap: Duration::from_millis(opts.max_backoff_ms),
        max_attempts: opts.max_attempts.max(1),
    };
    Ok(Ingestor::new(Arc::new(submitter), retry).with_journal(Arc::new(journal)))
}

fn print_task(t: &IngestTask) {
    let md5 = t.md5.as_ref().map(|m| m.as_str()).unwrap_or("-");
    let state = serde_json::to_value(t.state).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
    match &t.detail {
        Some(d) => println!("{state}\t{md5}\t{}\t{d}", t.path.display()),
        None => println!("{state}\t{md5}\t{}", t.path.display()),
    }
}

fn ctrl_c_flag() -> Arc<AtomicBool> {
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().expect("runtime");
        rt.block_on(async {
            let _ = tokio::signal::ctrl_c().await;
        });
        flag.store(true, Ordering::SeqCst);
    });
    stop
}

fn wait_for(stop: &AtomicBool) {
    while !stop.load(Ordering::SeqCst) {
        std::thread::sleep(Duration::from_millis(200));
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Keygen => {
            let key = SecretKey::random(&mut rand::rngs::OsRng);
            println!("secret  {}", hex::encode(key.to_bytes()));
            println!("address {}", key.address());
            Ok(ExitCode::SUCCESS)
        }
        Command::Init { key_env, difficulty, out } => {
            let key = key_from_env(&key_env).map_err(|e| e.to_string())?;
            let now = chrono::Utc::now().timestamp().max(0) as u64;
            let genesis = create_genesis(&key, now, Difficulty(difficulty));
            std::fs::write(&out, genesis.encode()).map_err(|e| format!("{}: {e}", out.display()))?;
            println!("genesis {}", genesis.hash());
            println!("master  {}", key.address());
            Ok(ExitCode::SUCCESS)
        }
        Command::Node { config } => {
            let cfg = ServiceConfig::load(&config).map_err(|e| e.to_string())?;
            let daemon = Daemon::start(&cfg).map_err(|e| e.to_string())?;
            println!("node {} serving {}", daemon.node.id(), daemon.api_url());
            wait_for(&ctrl_c_flag());
            daemon.shutdown();
            Ok(ExitCode::SUCCESS)
        }
        Command::Ingest { mode } => {
            let all_ok = match mode {
                IngestMode::Scan { dir, opts } => {
                    let ing = ingestor(&opts)?;
                    let tasks = scan(&dir)
                        .map_err(|e| format!("{}: {e}", dir.display()))?
                        .iter()
                        .map(|p| IngestTask::for_file(p, &opts.source_prefix))
                        .collect::<std::io::Result<Vec<_>>>()
                        .map_err(|e| e.to_string())?;
                    let done = ing.ingest_all(tasks, opts.parallelism);
                    done.iter().for_each(print_task);
                    done.iter().all(|t| t.state.is_success())
                }
                IngestMode::Watch { dir, interval_secs, opts } => {
                    let ing = ingestor(&opts)?;
                    let stop = ctrl_c_flag();
                    let mut ok = true;
                    watch(
                        &ing,
                        &dir,
                        &opts.source_prefix,
                        Duration::from_secs(interval_secs.max(1)),
                        opts.parallelism,
                        &stop,
                        |t| {
                            ok &= t.state.is_success();
                            print_task(t);
                        },
                    )
                    .map_err(|e| e.to_string())?;
                    ok
                }
                IngestMode::File { path, parent_md5, opts } => {
                    let ing = ingestor(&opts)?;
                    let task = match parent_md5 {
                        Some(p) => {
                            let parent = Md5Index::parse(&p).map_err(|e| format!("--parent-md5: {e}"))?;
                            ing.register_derived_asset(parent, &path, &opts.source_prefix)
                        }
                        None => IngestTask::for_file(&path, &opts.source_prefix).map(|t| ing.ingest_path(t)),
                    }
                    .map_err(|e| e.to_string())?;
                    print_task(&task);
                    task.state.is_success()
                }
            };
            Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Verify { file, api, quiet } => {
            let verifier = Verifier::new(&api, Duration::from_secs(30)).map_err(|e| e.to_string())?;
            let report = verifier.verify_file(&file);
            print!("{}", report.render(quiet));
            Ok(ExitCode::from(report.verdict.exit_code() as u8))
        }
        Command::MockChain {
            listen,
            fund,
            block_time_ms,
        } => {
            let chain = Arc::new(MockChain::new("mock"));
            for entry in &fund {
                let (addr, wei) = entry.split_once('=').ok_or_else(|| format!("--fund {entry}: expected ADDRESS=WEI"))?;
                let addr: Address = addr.parse().map_err(|e| format!("--fund {entry}: {e}"))?;
                let wei: u128 = wei.parse().map_err(|e| format!("--fund {entry}: {e}"))?;
                chain.fund(addr, wei);
            }
            let server = ServerHandle::spawn(mock_rpc_router(chain.clone()), listen).map_err(|e| e.to_string())?;
            println!("mock chain listening on {}", server.url());
            let stop = ctrl_c_flag();
            if block_time_ms == 0 {
                wait_for(&stop);
            } else {
                while !stop.load(Ordering::SeqCst) {
                    std::thread::sleep(Duration::from_millis(block_time_ms));
                    chain.step();
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(4)
        }
    }
}
