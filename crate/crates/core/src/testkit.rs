//! Deterministic fixtures for tests, harnesses and documentation examples.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::crypto::SecretKey;
use crate::hash::{sha256, BlockHash};
use crate::ledger::{
    create_genesis, AssetRecord, Block, ChainState, Difficulty, Ledger, LedgerTransaction,
    Md5Index, Permission, Permissions, Sha256Hex,
};
use crate::network::{Clock, LoopbackNet, Node, NodeConfig, SessionState};

/// Secret key with scalar `n` (n > 0). Only for tests.
pub fn key(n: u64) -> SecretKey {
    assert!(n > 0, "zero is not a valid secret scalar");
    let mut b = [0u8; 32];
    b[24..].copy_from_slice(&n.to_be_bytes());
    SecretKey::from_bytes(&b).expect("small scalars are valid keys")
}

/// Genesis timestamp used by fixtures: Thu, 05 Apr 2018 20:09:38 GMT.
pub const GENESIS_TIME: u64 = 1_522_958_978;

pub fn client_permissions() -> Permissions {
    Permissions::of(&[Permission::Connect, Permission::Send, Permission::Receive])
}

/// Asset whose hashes are derived from `seed`; stands in for a real file.
pub fn asset(seed: u64) -> AssetRecord {
    let digest = sha256(&seed.to_be_bytes());
    AssetRecord {
        md5_index: Md5Index::parse(&hex::encode(&digest[..16])).unwrap(),
        sha256: Sha256Hex::parse(&hex::encode(sha256(&digest))).unwrap(),
        source_uri: format!("network.local/ingest/mnt/data/file-{seed}"),
        processed_ts: 1_519_316_242_073 + seed,
        metadata: BTreeMap::new(),
        parent_md5: None,
    }
}

pub fn random_asset<R: Rng>(rng: &mut R) -> AssetRecord {
    asset(rng.next_u64())
}

/// Builds chains directly on a [`ChainState`], mining every block with the
/// master key.
#[derive(Clone)]
pub struct ChainBuilder {
    pub master: SecretKey,
    pub state: ChainState,
    pub clock: u64,
}

impl ChainBuilder {
    pub fn new(difficulty: Difficulty) -> Self {
        let master = key(1);
        let genesis = create_genesis(&master, GENESIS_TIME, difficulty);
        ChainBuilder {
            state: ChainState::from_genesis(genesis, difficulty).unwrap(),
            master,
            clock: GENESIS_TIME,
        }
    }

    pub fn genesis(&self) -> Block {
        self.state.block(0).unwrap().clone()
    }

    pub fn next_ms(&mut self) -> u64 {
        self.clock += 1;
        self.clock * 1000
    }

    /// Mines `txs` into the next block and appends it.
    pub fn mine(&mut self, txs: Vec<LedgerTransaction>) -> Block {
        self.clock += 60;
        let block = self
            .state
            .mine_block(txs, self.master.address(), self.clock)
            .expect("fixture transactions are admissible");
        self.state.append_block(block.clone()).unwrap();
        block
    }

    pub fn grant(&mut self, subject: &SecretKey, perms: Permissions) -> Block {
        let ms = self.next_ms();
        let tx = self
            .state
            .set_permission_tx(subject.address(), perms, true, &self.master, ms)
            .unwrap();
        self.mine(vec![tx])
    }

    pub fn asset_tx(&mut self, issuer: &SecretKey, record: AssetRecord) -> LedgerTransaction {
        let ms = self.next_ms();
        self.state
            .issue_asset_tx(record, issuer, ms, std::iter::empty())
            .unwrap()
    }

    /// Extends the chain to `len` blocks, putting `per_block` fresh assets
    /// (issued by the master) into each new block.
    pub fn extend_with_assets(&mut self, len: u64, per_block: usize, seed: &mut u64) {
        while self.state.len() < len {
            let txs = (0..per_block)
                .map(|_| {
                    *seed += 1;
                    let master = self.master.clone();
                    self.asset_tx(&master, asset(*seed))
                })
                .collect();
            self.mine(txs);
        }
    }
}

/// Flips one byte of one record.
pub fn mutate_record(records: &mut [Vec<u8>], block: usize, offset: usize, xor: u8) {
    debug_assert_ne!(xor, 0);
    records[block][offset] ^= xor;
}

/// Fills `n` bytes of pseudo-random payload.
pub fn random_bytes<R: RngCore>(rng: &mut R, n: usize) -> Vec<u8> {
    let mut v = vec![0u8; n];
    rng.fill_bytes(&mut v);
    v
}

/// A loopback network of nodes sharing one genesis and one manual clock.
/// Node 0 holds the master key; the others start with no permissions.
pub struct Cluster {
    pub net: Arc<LoopbackNet>,
    pub nodes: Vec<Arc<Node>>,
    pub genesis: Block,
    pub difficulty: Difficulty,
    clock_ms: Arc<AtomicI64>,
}

impl Cluster {
    pub fn new(n: usize, difficulty: Difficulty) -> Self {
        let genesis = create_genesis(&key(1), GENESIS_TIME, difficulty);
        let mut c = Cluster {
            net: LoopbackNet::new(),
            nodes: Vec::new(),
            genesis,
            difficulty,
            clock_ms: Arc::new(AtomicI64::new(GENESIS_TIME as i64 * 1000)),
        };
        for i in 0..n {
            let ledger = Arc::new(Ledger::new(c.genesis.clone(), difficulty).unwrap());
            c.add_node(key(i as u64 + 1), ledger);
        }
        c
    }

    pub fn clock(&self) -> Clock {
        let ms = self.clock_ms.clone();
        Arc::new(move || {
            chrono::DateTime::from_timestamp_millis(ms.load(Ordering::SeqCst)).unwrap()
        })
    }

    pub fn advance(&self, secs: i64) {
        self.clock_ms.fetch_add(secs * 1000, Ordering::SeqCst);
    }

    pub fn add_node(&mut self, key: SecretKey, ledger: Arc<Ledger>) -> Arc<Node> {
        let addr = format!("node{}", self.nodes.len());
        let node = Node::with_clock(
            key,
            addr,
            ledger,
            self.net.clone(),
            NodeConfig::default(),
            self.clock(),
        );
        self.net.register(&node);
        self.nodes.push(node.clone());
        node
    }

    pub fn master(&self) -> &Arc<Node> {
        &self.nodes[0]
    }

    /// Master mines one block from its pending pool.
    pub fn mine(&self) -> Block {
        self.advance(60);
        self.master().mine_pending().expect("master can mine").0
    }

    /// Grants `perms` to node `i` and mines the grant.
    pub fn admit(&self, i: usize, perms: Permissions) {
        self.advance(1);
        self.master()
            .set_permission(self.nodes[i].id(), perms, true)
            .expect("master is admin");
        self.mine();
    }

    /// Grants client permissions to every non-master node, then opens
    /// sessions between every pair and syncs everyone.
    pub fn bootstrap(&self) {
        for i in 1..self.nodes.len() {
            self.admit(i, client_permissions());
        }
        for i in 1..self.nodes.len() {
            self.nodes[i].connect(self.master().listen_addr()).unwrap();
            self.nodes[i].sync_with_peer(self.master().id()).unwrap();
        }
        self.connect_all();
    }

    /// Opens sessions between every pair that lacks one.
    pub fn connect_all(&self) {
        for a in &self.nodes {
            for b in &self.nodes {
                if a.id() != b.id()
                    && a.session(&b.id()).map(|s| s.state) != Some(SessionState::Active)
                {
                    let _ = a.connect(b.listen_addr());
                }
            }
        }
    }

    pub fn tips(&self) -> Vec<BlockHash> {
        self.nodes.iter().map(|n| n.snapshot().tip_hash()).collect()
    }
}
