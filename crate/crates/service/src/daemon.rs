//! A running node: P2P server, HTTP API, and the mining, peering and
//! anchoring loops.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use anchorledger::anchor::{
    run_schedule_tick, AnchorLog, AnchorStatus, Anchorer, ScheduleAction, ScheduleConfig, SharedBackend, Wallet,
    WalletError,
};
use anchorledger::ledger::{Block, Difficulty, Ledger, LedgerError, Permission};
use anchorledger::network::{Node, NodeConfig, SessionState, TcpServer, TcpTransport};
use anchorledger::SecretKey;

use crate::api::{router, ApiSettings, AppState};
use crate::config::ServiceConfig;
use crate::rpc::HttpRpcBackend;
use crate::server::ServerHandle;

pub const WALLET_KEY_ENV: &str = "ANCHORLEDGER_WALLET_KEY";
pub const CHAIN_DIR: &str = "chain";
pub const ANCHOR_LOG: &str = "anchors.jsonl";
const SCHEDULER_TICK: Duration = Duration::from_secs(30);

#[derive(Debug, thiserror::Error)]
pub enum DaemonError {
    #[error("node key: {0}")]
    NodeKey(String),
    #[error("wallet key: {0}")]
    Wallet(#[from] WalletError),
    #[error("genesis {path}: {detail}")]
    Genesis { path: String, detail: String },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("backend {id}: {detail}")]
    Backend { id: String, detail: String },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub fn key_from_env(var: &str) -> Result<SecretKey, DaemonError> {
    let hex = std::env::var(var).map_err(|_| DaemonError::NodeKey(format!("{var} is not set")))?;
    SecretKey::from_hex(hex.trim()).map_err(|e| DaemonError::NodeKey(e.to_string()))
}

pub fn read_genesis(path: &Path) -> Result<Block, DaemonError> {
    let err = |detail: String| DaemonError::Genesis {
        path: path.display().to_string(),
        detail,
    };
    let bytes = std::fs::read(path).map_err(|e| err(e.to_string()))?;
    Block::decode(&bytes).map_err(|e| err(e.to_string()))
}

pub struct Daemon {
    pub node: Arc<Node>,
    pub anchorer: Arc<Anchorer>,
    api: ServerHandle,
    _p2p: TcpServer,
    stop: Arc<AtomicBool>,
    loops: Vec<JoinHandle<()>>,
}

impl Daemon {
    pub fn start(cfg: &ServiceConfig) -> Result<Self, DaemonError> {
        let key = key_from_env(&cfg.node.key_env)?;
        let genesis = read_genesis(&cfg.node.genesis)?;
        std::fs::create_dir_all(&cfg.data_dir)?;
        let chain_dir = cfg.data_dir.join(CHAIN_DIR);
        std::fs::create_dir_all(&chain_dir)?;
        let ledger = Arc::new(Ledger::open(&chain_dir, genesis, Difficulty(cfg.node.difficulty))?);
        let node = Node::new(
            key,
            cfg.node.p2p_listen.clone(),
            ledger,
            Arc::new(TcpTransport),
            NodeConfig::default(),
        );
        let p2p = TcpServer::spawn(node.clone(), &cfg.node.p2p_listen)?;

        let mut backends: Vec<SharedBackend> = Vec::new();
        for b in &cfg.backends {
            let rpc = HttpRpcBackend::new(b.id.clone(), b.url.clone(), b.timeout()).map_err(|e| DaemonError::Backend {
                id: b.id.clone(),
                detail: e.to_string(),
            })?;
            backends.push(Arc::new(rpc));
        }
        let log = AnchorLog::open(&cfg.data_dir.join(ANCHOR_LOG))?;
        let anchorer = Arc::new(Anchorer::new(
            Wallet::from_env(WALLET_KEY_ENV)?,
            backends,
            cfg.anchor.clone(),
            log,
        ));

        let admin_secret = cfg
            .api
            .admin_secret_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok())
            .filter(|s| !s.is_empty());
        let settings = ApiSettings {
            allowlist: cfg.api.allowlist.clone(),
            default_per_page: cfg.api.default_per_page,
            max_per_page: cfg.api.max_per_page,
            admin_secret,
            schedule: cfg.schedule.clone(),
        };
        let api = ServerHandle::spawn(router(AppState::new(node.clone(), anchorer.clone(), settings)), cfg.api.listen)?;
        tracing::info!(node = %node.id(), p2p = %p2p.local_addr(), api = %api.addr(), "node started");

        let stop = Arc::new(AtomicBool::new(false));
        let mut loops = Vec::new();
        {
            let (node, stop, peers) = (node.clone(), stop.clone(), cfg.node.peers.clone());
            let every = Duration::from_secs(cfg.node.sync_interval_secs.max(1));
            loops.push(spawn_loop("peering", stop.clone(), every, move || peering_round(&node, &peers)));
        }
        {
            let node = node.clone();
            let every = Duration::from_secs(cfg.node.block_interval_secs.max(1));
            loops.push(spawn_loop("miner", stop.clone(), every, move || mining_round(&node)));
        }
        {
            let (node, anchorer, schedule) = (node.clone(), anchorer.clone(), cfg.schedule.clone());
            loops.push(spawn_loop("anchor", stop.clone(), SCHEDULER_TICK, move || {
                anchor_round(&node, &anchorer, &schedule)
            }));
        }
        Ok(Daemon {
            node,
            anchorer,
            api,
            _p2p: p2p,
            stop,
            loops,
        })
    }

    pub fn api_url(&self) -> String {
        self.api.url()
    }

    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.loops.drain(..) {
            let _ = t.join();
        }
    }
}

fn spawn_loop(name: &str, stop: Arc<AtomicBool>, every: Duration, mut round: impl FnMut() + Send + 'static) -> JoinHandle<()> {
    std::thread::Builder::new()
        .name(name.to_string())
        .spawn(move || {
            while !stop.load(Ordering::SeqCst) {
                round();
                let mut waited = Duration::ZERO;
                while waited < every && !stop.load(Ordering::SeqCst) {
                    let step = Duration::from_millis(100).min(every - waited);
                    std::thread::sleep(step);
                    waited += step;
                }
            }
        })
        .expect("spawn loop thread")
}

/// Connects to configured peers lacking a session, then syncs with all.
pub fn peering_round(node: &Node, peers: &[String]) {
    for addr in peers {
        let connected = node
            .sessions()
            .iter()
            .any(|s| &s.remote_address == addr && s.state == SessionState::Active);
        if !connected {
            if let Err(e) = node.connect(addr) {
                tracing::debug!(peer = %addr, error = %e, "connect failed");
            }
        }
    }
    for (peer, result) in node.sync_all() {
        match result {
            Ok(out) if out.applied > 0 => tracing::info!(%peer, applied = out.applied, reorg = out.reorganized, "synced"),
            Ok(_) => {}
            Err(e) => tracing::warn!(%peer, error = %e, "sync failed"),
        }
    }
}

/// Mines one block when this node may mine and the pool is non-empty.
pub fn mining_round(node: &Node) {
    if node.pending().is_empty() || !node.snapshot().has_permission(&node.id(), Permission::Mine) {
        return;
    }
    match node.mine_pending() {
        Ok((block, report)) => tracing::info!(
            height = block.height(),
            txs = block.transactions.len(),
            peers = report.deliveries.len(),
            "mined"
        ),
        Err(e) => tracing::warn!(error = %e, "mining failed"),
    }
}

/// Refreshes open anchors and fires the daily anchor when due.
pub fn anchor_round(node: &Node, anchorer: &Anchorer, schedule: &ScheduleConfig) {
    for r in anchorer.records().iter().filter(|r| r.status == AnchorStatus::Submitted) {
        anchorer.status(r.id);
    }
    let now = node.now();
    let last = anchorer.last_anchor().map(|r| r.anchored_at);
    if run_schedule_tick(now, schedule, last) == ScheduleAction::Anchor {
        match anchorer.submit_anchor(&node.snapshot(), None, now) {
            Ok(r) => tracing::info!(id = r.id, height = r.private_height, "scheduled anchor submitted"),
            Err(e) => tracing::warn!(error = %e, "scheduled anchor refused"),
        }
    }
}
