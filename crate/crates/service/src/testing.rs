//! A complete in-process stack for tests and harnesses: a loopback node
//! cluster, a funded mock public chain, an anchorer and the HTTP router.

use std::net::SocketAddr;
use std::sync::{Arc, OnceLock};

use anchorledger::anchor::{AnchorConfig, AnchorLog, AnchorRecord, Anchorer, MockChain, SharedBackend, Wallet};
use anchorledger::ledger::{Block, Difficulty};
use anchorledger::network::Node;
use anchorledger::testkit::{key, Cluster};
use anchorledger::SecretKey;
use axum::Router;

use crate::api::{router, ApiSettings, AppState};
use crate::server::ServerHandle;

pub const TEST_ADMIN_SECRET: &str = "correct horse battery staple";

/// 999,999 ether.
pub const TEST_FUNDING_WEI: u128 = 999_999 * 10u128.pow(18);

pub struct Stack {
    pub cluster: Cluster,
    pub chain: Arc<MockChain>,
    pub anchorer: Arc<Anchorer>,
    pub wallet: SecretKey,
    pub settings: ApiSettings,
    master: OnceLock<AppState>,
}

impl Stack {
    /// `nodes` bootstrapped nodes (node 0 is the master), a funded wallet and
    /// one mock backend. Submissions are allowed from loopback only.
    pub fn new(nodes: usize) -> Self {
        Self::with_log(nodes, AnchorLog::in_memory())
    }

    pub fn with_log(nodes: usize, log: AnchorLog) -> Self {
        let cluster = Cluster::new(nodes, Difficulty(1));
        cluster.bootstrap();
        Self::with_cluster(cluster, log)
    }

    /// Wraps an already prepared cluster.
    pub fn with_cluster(cluster: Cluster, log: AnchorLog) -> Self {
        let chain = Arc::new(MockChain::new("mock"));
        let wallet = key(4242);
        chain.fund(wallet.address(), TEST_FUNDING_WEI);
        let backends: Vec<SharedBackend> = vec![chain.clone()];
        let anchorer = Arc::new(Anchorer::new(
            Wallet::new(wallet.clone()),
            backends,
            AnchorConfig::default(),
            log,
        ));
        let settings = ApiSettings {
            allowlist: vec!["127.0.0.0/8".parse().unwrap(), "::1/128".parse().unwrap()],
            admin_secret: Some(TEST_ADMIN_SECRET.into()),
            ..ApiSettings::default()
        };
        Stack {
            cluster,
            chain,
            anchorer,
            wallet,
            settings,
            master: OnceLock::new(),
        }
    }

    pub fn node(&self, i: usize) -> &Arc<Node> {
        &self.cluster.nodes[i]
    }

    pub fn state(&self, i: usize) -> AppState {
        AppState::new(self.node(i).clone(), self.anchorer.clone(), self.settings.clone())
    }

    /// Router served by the master node. Its state, and with it the
    /// public-chain cache, is built on first use and shared afterwards.
    pub fn router(&self) -> Router {
        router(self.master.get_or_init(|| self.state(0)).clone())
    }

    pub fn serve(&self) -> ServerHandle {
        let any: SocketAddr = "127.0.0.1:0".parse().unwrap();
        ServerHandle::spawn(self.router(), any).expect("bind loopback")
    }

    /// Mines `n` blocks on the master and returns the last.
    pub fn mine(&self, n: usize) -> Option<Block> {
        (0..n).map(|_| self.cluster.mine()).last()
    }

    /// Buries the current tip under the confirm depth, anchors it and
    /// buries the public transaction deep enough to count as confirmed.
    pub fn anchor_everything(&self) -> AnchorRecord {
        let depth = self.anchorer.config().confirm_depth as usize;
        self.mine(depth);
        let record = self
            .anchorer
            .submit_anchor(&self.node(0).snapshot(), None, self.node(0).now())
            .expect("anchor");
        self.chain.advance(depth as u64);
        record
    }
}
