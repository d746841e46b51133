use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use chrono::{DateTime, Utc};
use rand::RngCore;
use serde::Serialize;

use crate::crypto::{NodeId, SecretKey};
use crate::ledger::{
    AssetRecord, Block, BlockError, ChainState, Ledger, LedgerError, LedgerTransaction, Permission,
    Permissions, TxError,
};

use super::fork::{resolve_fork, ForkChoice, ForkError};
use super::message::{AckStatus, Body, Challenge, WireMessage};
use super::transport::{Transport, TransportError};

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Debug, Clone)]
pub struct NodeConfig {
    /// Upper bound on any single request to a peer.
    pub peer_timeout: Duration,
    pub max_blocks_per_reply: u32,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig {
            peer_timeout: Duration::from_secs(5),
            max_blocks_per_reply: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Handshaking,
    Active,
    Rejected,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PeerSession {
    pub peer_id: NodeId,
    pub remote_address: String,
    /// Permissions the peer held when the session was opened.
    pub permissions: Permissions,
    pub state: SessionState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub peer: NodeId,
    pub at: DateTime<Utc>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerDelivery {
    pub peer: NodeId,
    pub address: String,
    pub outcome: Result<(AckStatus, String), TransportError>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeliveryReport {
    pub deliveries: Vec<PeerDelivery>,
}

impl DeliveryReport {
    pub fn count(&self, status: AckStatus) -> usize {
        self.deliveries
            .iter()
            .filter(|d| matches!(d.outcome, Ok((s, _)) if s == status))
            .count()
    }

    pub fn failures(&self) -> usize {
        self.deliveries.iter().filter(|d| d.outcome.is_err()).count()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SyncOutcome {
    pub applied: u64,
    pub reorganized: bool,
    /// Orphaned asset transactions put back into the pending pool.
    pub requeued: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("handshake rejected: {0}")]
    HandshakeRejected(String),
    #[error("reply not signed by the expected peer")]
    BadReply,
    #[error("unexpected reply: {0}")]
    UnexpectedReply(String),
    #[error("no active session with {0}")]
    NoSession(NodeId),
    #[error("peer {peer} served an invalid block at height {height}: {error}")]
    InvalidBlock {
        peer: NodeId,
        height: u64,
        error: BlockError,
    },
    #[error(transparent)]
    Fork(#[from] ForkError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// A peer-to-peer participant: owns the ledger handle, the pending pool and
/// the session table, and answers [`WireMessage`]s.
pub struct Node {
    key: SecretKey,
    id: NodeId,
    listen_addr: String,
    ledger: Arc<Ledger>,
    transport: Arc<dyn Transport>,
    config: NodeConfig,
    clock: Clock,
    /// Serializes every ledger write made by this node.
    writer: Mutex<()>,
    pending: Mutex<Vec<LedgerTransaction>>,
    sessions: RwLock<HashMap<NodeId, PeerSession>>,
    challenges: Mutex<HashMap<NodeId, Challenge>>,
    violations: Mutex<Vec<Violation>>,
    flagged: Mutex<HashSet<NodeId>>,
}

impl std::fmt::Debug for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Node")
            .field("id", &self.id)
            .field("listen_addr", &self.listen_addr)
            .finish_non_exhaustive()
    }
}

fn system_clock() -> Clock {
    Arc::new(Utc::now)
}

impl Node {
    pub fn new(
        key: SecretKey,
        listen_addr: impl Into<String>,
        ledger: Arc<Ledger>,
        transport: Arc<dyn Transport>,
        config: NodeConfig,
    ) -> Arc<Self> {
        Self::with_clock(key, listen_addr, ledger, transport, config, system_clock())
    }

    pub fn with_clock(
        key: SecretKey,
        listen_addr: impl Into<String>,
        ledger: Arc<Ledger>,
        transport: Arc<dyn Transport>,
        config: NodeConfig,
        clock: Clock,
    ) -> Arc<Self> {
        Arc::new(Node {
            id: key.address(),
            key,
            listen_addr: listen_addr.into(),
            ledger,
            transport,
            config,
            clock,
            writer: Mutex::new(()),
            pending: Mutex::new(Vec::new()),
            sessions: RwLock::new(HashMap::new()),
            challenges: Mutex::new(HashMap::new()),
            violations: Mutex::new(Vec::new()),
            flagged: Mutex::new(HashSet::new()),
        })
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn listen_addr(&self) -> &str {
        &self.listen_addr
    }

    pub fn ledger(&self) -> &Arc<Ledger> {
        &self.ledger
    }

    pub fn snapshot(&self) -> Arc<ChainState> {
        self.ledger.snapshot()
    }

    pub fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }

    pub fn pending(&self) -> Vec<LedgerTransaction> {
        self.pending.lock().unwrap().clone()
    }

    pub fn sessions(&self) -> Vec<PeerSession> {
        let mut v: Vec<_> = self.sessions.read().unwrap().values().cloned().collect();
        v.sort_by_key(|s| s.peer_id);
        v
    }

    pub fn session(&self, peer: &NodeId) -> Option<PeerSession> {
        self.sessions.read().unwrap().get(peer).cloned()
    }

    pub fn active_peers(&self) -> Vec<NodeId> {
        self.sessions()
            .into_iter()
            .filter(|s| s.state == SessionState::Active)
            .map(|s| s.peer_id)
            .collect()
    }

    pub fn violations(&self) -> Vec<Violation> {
        self.violations.lock().unwrap().clone()
    }

    pub fn is_flagged(&self, peer: &NodeId) -> bool {
        self.flagged.lock().unwrap().contains(peer)
    }

    fn violation(&self, peer: NodeId, detail: impl Into<String>) {
        let detail = detail.into();
        tracing::warn!(node = %self.id, %peer, %detail, "protocol violation");
        self.violations.lock().unwrap().push(Violation {
            peer,
            at: self.now(),
            detail,
        });
    }

    fn flag(&self, peer: NodeId, detail: impl Into<String>) {
        self.violation(peer, detail);
        self.flagged.lock().unwrap().insert(peer);
        self.set_state(&peer, SessionState::Closed);
    }

    fn set_state(&self, peer: &NodeId, state: SessionState) {
        if let Some(s) = self.sessions.write().unwrap().get_mut(peer) {
            s.state = state;
        }
    }

    fn sign(&self, body: Body) -> WireMessage {
        WireMessage::sign(&self.key, body)
    }

    fn ack(&self, status: AckStatus, detail: impl Into<String>) -> WireMessage {
        self.sign(Body::ack(status, detail))
    }

    fn request(&self, addr: &str, peer: Option<NodeId>, body: Body) -> Result<WireMessage, NetworkError> {
        let reply = self
            .transport
            .request(addr, &self.sign(body), self.config.peer_timeout)?;
        if !reply.verify() || peer.is_some_and(|p| p != reply.sender) {
            return Err(NetworkError::BadReply);
        }
        Ok(reply)
    }

    // ---- handshake ------------------------------------------------------

    /// Opens a session with the node listening at `addr`. Both sides must
    /// hold `connect` on their current chains and share a genesis block.
    pub fn connect(&self, addr: &str) -> Result<NodeId, NetworkError> {
        let state = self.snapshot();
        let mut mine = [0u8; 32];
        rand::thread_rng().fill_bytes(&mut mine);
        let reply = self.request(
            addr,
            None,
            Body::Hello {
                challenge: mine,
                genesis: state.genesis_hash(),
                listen: self.listen_addr.clone(),
            },
        )?;
        let peer = reply.sender;
        let theirs = match reply.body {
            Body::HelloAck {
                echo,
                challenge: Some(c),
                genesis,
            } if echo == mine && genesis == state.genesis_hash() => c,
            Body::Ack { detail, .. } => return Err(NetworkError::HandshakeRejected(detail)),
            other => return Err(NetworkError::UnexpectedReply(format!("{:?}", other.kind()))),
        };
        let perms = state.permissions_of(&peer);
        if !perms.contains(Permission::Connect) {
            self.record_session(peer, addr, perms, SessionState::Rejected);
            self.violation(peer, "handshake: peer lacks connect");
            return Err(NetworkError::HandshakeRejected(format!("{peer} lacks connect")));
        }
        let reply = self.request(
            addr,
            Some(peer),
            Body::HelloAck {
                echo: theirs,
                challenge: None,
                genesis: state.genesis_hash(),
            },
        )?;
        match reply.body {
            Body::Ack {
                status: AckStatus::Accepted,
                ..
            } => {
                self.record_session(peer, addr, perms, SessionState::Active);
                tracing::info!(node = %self.id, %peer, addr, "session active");
                Ok(peer)
            }
            Body::Ack { detail, .. } => Err(NetworkError::HandshakeRejected(detail)),
            other => Err(NetworkError::UnexpectedReply(format!("{:?}", other.kind()))),
        }
    }

    fn record_session(&self, peer: NodeId, addr: &str, permissions: Permissions, state: SessionState) {
        self.sessions.write().unwrap().insert(
            peer,
            PeerSession {
                peer_id: peer,
                remote_address: addr.to_string(),
                permissions,
                state,
            },
        );
    }

    // ---- inbound --------------------------------------------------------

    /// Answers one inbound message. Never panics on peer input; every
    /// refusal is an `Ack` with status `Rejected`.
    pub fn handle(&self, remote: &str, msg: WireMessage) -> WireMessage {
        if !msg.verify() {
            self.violation(msg.sender, "bad message signature");
            return self.ack(AckStatus::Rejected, "bad signature");
        }
        let peer = msg.sender;
        let state = self.snapshot();
        match msg.body {
            Body::Hello {
                challenge,
                genesis,
                listen,
            } => self.on_hello(&state, peer, challenge, genesis, if listen.is_empty() { remote.to_string() } else { listen }),
            Body::HelloAck {
                echo,
                challenge: None,
                genesis,
            } => self.on_hello_finish(&state, peer, echo, genesis),
            body => {
                if let Err(reason) = self.gate(&state, peer) {
                    return self.ack(AckStatus::Rejected, reason);
                }
                match body {
                    Body::TxBroadcast(tx) => self.on_tx(&state, peer, tx),
                    Body::BlockBroadcast(block) => self.on_block(peer, block),
                    Body::GetBlocks { from_height, limit } => self.on_get_blocks(&state, peer, from_height, limit),
                    other => {
                        self.violation(peer, format!("unsolicited {:?}", other.kind()));
                        self.ack(AckStatus::Rejected, "unexpected message")
                    }
                }
            }
        }
    }

    /// Active session and current `connect` permission.
    fn gate(&self, state: &ChainState, peer: NodeId) -> Result<(), String> {
        let active = self
            .session(&peer)
            .is_some_and(|s| s.state == SessionState::Active);
        if !active {
            self.violation(peer, "message without an active session");
            return Err("no active session".into());
        }
        if !state.has_permission(&peer, Permission::Connect) {
            self.set_state(&peer, SessionState::Closed);
            self.violation(peer, "connect permission revoked");
            return Err("connect permission revoked".into());
        }
        Ok(())
    }

    fn on_hello(
        &self,
        state: &ChainState,
        peer: NodeId,
        echo: Challenge,
        genesis: crate::hash::BlockHash,
        listen: String,
    ) -> WireMessage {
        if genesis != state.genesis_hash() {
            return self.ack(AckStatus::Rejected, "incompatible network");
        }
        let perms = state.permissions_of(&peer);
        if !perms.contains(Permission::Connect) {
            self.record_session(peer, &listen, perms, SessionState::Rejected);
            self.violation(peer, "handshake: peer lacks connect");
            return self.ack(AckStatus::Rejected, "connect permission required");
        }
        let mut mine = [0u8; 32];
        rand::thread_rng().fill_bytes(&mut mine);
        self.challenges.lock().unwrap().insert(peer, mine);
        self.record_session(peer, &listen, perms, SessionState::Handshaking);
        self.sign(Body::HelloAck {
            echo,
            challenge: Some(mine),
            genesis: state.genesis_hash(),
        })
    }

    fn on_hello_finish(
        &self,
        state: &ChainState,
        peer: NodeId,
        echo: Challenge,
        genesis: crate::hash::BlockHash,
    ) -> WireMessage {
        let expected = self.challenges.lock().unwrap().remove(&peer);
        if expected != Some(echo) || genesis != state.genesis_hash() {
            self.set_state(&peer, SessionState::Rejected);
            self.violation(peer, "handshake: challenge not echoed");
            return self.ack(AckStatus::Rejected, "challenge mismatch");
        }
        let perms = state.permissions_of(&peer);
        if !perms.contains(Permission::Connect) {
            self.set_state(&peer, SessionState::Rejected);
            return self.ack(AckStatus::Rejected, "connect permission required");
        }
        if let Some(s) = self.sessions.write().unwrap().get_mut(&peer) {
            s.permissions = perms;
            s.state = SessionState::Active;
        }
        self.ack(AckStatus::Accepted, "")
    }

    fn on_tx(&self, state: &ChainState, peer: NodeId, tx: LedgerTransaction) -> WireMessage {
        if !state.has_permission(&peer, Permission::Send) {
            self.violation(peer, "tx broadcast without send permission");
            return self.ack(AckStatus::Rejected, "send permission required");
        }
        match self.add_pending(tx) {
            Ok(true) => self.ack(AckStatus::Accepted, ""),
            Ok(false) => self.ack(AckStatus::Duplicate, ""),
            Err(e) => {
                if matches!(e, TxError::PermissionDenied { .. } | TxError::BadSignature(_)) {
                    self.violation(peer, format!("relayed invalid tx: {e}"));
                }
                self.ack(AckStatus::Rejected, e.to_string())
            }
        }
    }

    fn on_block(&self, peer: NodeId, block: Block) -> WireMessage {
        let _w = self.writer.lock().unwrap();
        let state = self.snapshot();
        let hash = block.hash();
        if state.height_of(&hash).is_some() {
            return self.ack(AckStatus::Duplicate, "");
        }
        if block.header.prev_hash != state.tip_hash() {
            return if block.header.height > state.tip_height() {
                self.ack(AckStatus::NeedSync, format!("local tip is {}", state.tip_height()))
            } else {
                self.ack(AckStatus::Duplicate, "not longer than the local chain")
            };
        }
        match self.ledger.append(block.clone()) {
            Ok(_) => {
                self.drop_included(&block);
                self.ack(AckStatus::Accepted, "")
            }
            Err(e) => {
                self.flag(peer, format!("invalid block {hash}: {e}"));
                self.ack(AckStatus::Rejected, e.to_string())
            }
        }
    }

    fn on_get_blocks(&self, state: &ChainState, peer: NodeId, from: u64, limit: u32) -> WireMessage {
        if !state.has_permission(&peer, Permission::Receive) {
            self.violation(peer, "get_blocks without receive permission");
            return self.ack(AckStatus::Rejected, "receive permission required");
        }
        let limit = limit.clamp(1, self.config.max_blocks_per_reply) as usize;
        let blocks = state
            .blocks()
            .skip(from.min(state.len()) as usize)
            .take(limit)
            .cloned()
            .collect();
        self.sign(Body::BlocksReply(blocks))
    }

    // ---- pending pool ---------------------------------------------------

    /// Admits `tx` to the pending pool. `Ok(false)` when already held.
    pub fn add_pending(&self, tx: LedgerTransaction) -> Result<bool, TxError> {
        let state = self.snapshot();
        let mut pending = self.pending.lock().unwrap();
        if pending.iter().any(|p| p.tx_id() == tx.tx_id()) {
            return Ok(false);
        }
        state.check_candidate(&tx, &pending)?;
        pending.push(tx);
        Ok(true)
    }

    fn drop_included(&self, block: &Block) {
        let ids: HashSet<_> = block.transactions.iter().map(|t| t.tx_id()).collect();
        self.pending.lock().unwrap().retain(|t| !ids.contains(&t.tx_id()));
    }

    /// Drops pending entries that are on chain or no longer admissible.
    fn prune_pending(&self) {
        let state = self.snapshot();
        let mut pending = self.pending.lock().unwrap();
        let mut kept: Vec<LedgerTransaction> = Vec::with_capacity(pending.len());
        for tx in pending.drain(..) {
            if state.check_candidate(&tx, &kept).is_ok() {
                kept.push(tx);
            }
        }
        *pending = kept;
    }

    // ---- outbound -------------------------------------------------------

    /// Sends `body` to every active peer in parallel. Per-peer failures are
    /// reported, never raised.
    pub fn propagate(&self, body: Body) -> DeliveryReport {
        let msg = self.sign(body);
        let state = self.snapshot();
        let targets: Vec<PeerSession> = self
            .sessions()
            .into_iter()
            .filter(|s| s.state == SessionState::Active)
            .filter(|s| {
                let ok = state.has_permission(&s.peer_id, Permission::Connect);
                if !ok {
                    self.set_state(&s.peer_id, SessionState::Closed);
                }
                ok
            })
            .collect();
        let timeout = self.config.peer_timeout;
        let deliveries = std::thread::scope(|scope| {
            let handles: Vec<_> = targets
                .iter()
                .map(|s| {
                    let msg = &msg;
                    scope.spawn(move || {
                        let outcome = self
                            .transport
                            .request(&s.remote_address, msg, timeout)
                            .map(|reply| match reply.body {
                                Body::Ack { status, detail } if reply.verify() => (status, detail),
                                _ => (AckStatus::Rejected, "malformed reply".to_string()),
                            });
                        PeerDelivery {
                            peer: s.peer_id,
                            address: s.remote_address.clone(),
                            outcome,
                        }
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        DeliveryReport { deliveries }
    }

    /// Builds, pools and broadcasts an asset issuance signed by this node.
    pub fn submit_asset(&self, asset: AssetRecord) -> Result<(LedgerTransaction, DeliveryReport), LedgerError> {
        let state = self.snapshot();
        let tx = {
            let pending = self.pending.lock().unwrap();
            state.issue_asset_tx(asset, &self.key, self.now().timestamp_millis() as u64, pending.iter())?
        };
        self.add_pending(tx.clone())?;
        let report = self.propagate(Body::TxBroadcast(tx.clone()));
        Ok((tx, report))
    }

    /// Pools and broadcasts an already signed transaction.
    pub fn submit_transaction(&self, tx: LedgerTransaction) -> Result<DeliveryReport, TxError> {
        self.add_pending(tx.clone())?;
        Ok(self.propagate(Body::TxBroadcast(tx)))
    }

    /// Signs and submits a permission change; this node must hold `admin`.
    pub fn set_permission(
        &self,
        subject: NodeId,
        permissions: Permissions,
        granted: bool,
    ) -> Result<(LedgerTransaction, DeliveryReport), LedgerError> {
        let tx = self.snapshot().set_permission_tx(
            subject,
            permissions,
            granted,
            &self.key,
            self.now().timestamp_millis() as u64,
        )?;
        let report = self.submit_transaction(tx.clone())?;
        Ok((tx, report))
    }

    /// Mines every admissible pending transaction (possibly none) into a new
    /// block, appends it and broadcasts it.
    pub fn mine_pending(&self) -> Result<(Block, DeliveryReport), LedgerError> {
        let block = {
            let _w = self.writer.lock().unwrap();
            self.prune_pending();
            let state = self.snapshot();
            let txs = self.pending();
            let block = state.mine_block(txs, self.id, self.now().timestamp().max(0) as u64)?;
            self.ledger.append(block.clone())?;
            self.drop_included(&block);
            block
        };
        tracing::debug!(node = %self.id, height = block.height(), txs = block.transactions.len(), "mined block");
        let report = self.propagate(Body::BlockBroadcast(block.clone()));
        Ok((block, report))
    }

    fn fetch_blocks(&self, addr: &str, peer: NodeId, from: u64) -> Result<Vec<Block>, NetworkError> {
        let limit = self.config.max_blocks_per_reply;
        match self.request(addr, Some(peer), Body::GetBlocks { from_height: from, limit })?.body {
            Body::BlocksReply(blocks) => Ok(blocks),
            Body::Ack { detail, .. } => Err(NetworkError::UnexpectedReply(detail)),
            other => Err(NetworkError::UnexpectedReply(format!("{:?}", other.kind()))),
        }
    }

    fn fetch_chain(&self, addr: &str, peer: NodeId) -> Result<Vec<Block>, NetworkError> {
        let mut all = Vec::new();
        loop {
            let page = self.fetch_blocks(addr, peer, all.len() as u64)?;
            let done = page.len() < self.config.max_blocks_per_reply as usize;
            if page.is_empty() {
                break;
            }
            all.extend(page);
            if done {
                break;
            }
        }
        Ok(all)
    }

    /// Pulls blocks above the local tip from `peer`. A peer on a different
    /// branch is resolved with the longest-chain rule; a peer serving an
    /// invalid block is flagged and the sync stops.
    pub fn sync_with_peer(&self, peer: NodeId) -> Result<SyncOutcome, NetworkError> {
        let session = self
            .session(&peer)
            .filter(|s| s.state == SessionState::Active)
            .ok_or(NetworkError::NoSession(peer))?;
        let addr = session.remote_address;
        let mut outcome = SyncOutcome::default();
        loop {
            let local = self.snapshot();
            let page = self.fetch_blocks(&addr, peer, local.len())?;
            let Some(first) = page.first() else {
                break;
            };
            if first.header.prev_hash != local.tip_hash() || first.header.height != local.len() {
                let remote = self.fetch_chain(&addr, peer)?;
                return self.adopt_if_longer(peer, &remote, outcome);
            }
            let _w = self.writer.lock().unwrap();
            for block in &page {
                if let Err(e) = self.ledger.append(block.clone()) {
                    let error = match e {
                        LedgerError::Block(b) => b,
                        other => return Err(other.into()),
                    };
                    self.flag(peer, format!("sync: invalid block at height {}: {error}", block.height()));
                    return Err(NetworkError::InvalidBlock {
                        peer,
                        height: block.height(),
                        error,
                    });
                }
                self.drop_included(block);
                outcome.applied += 1;
            }
            if page.len() < self.config.max_blocks_per_reply as usize {
                break;
            }
        }
        Ok(outcome)
    }

    fn adopt_if_longer(
        &self,
        peer: NodeId,
        remote: &[Block],
        mut outcome: SyncOutcome,
    ) -> Result<SyncOutcome, NetworkError> {
        let _w = self.writer.lock().unwrap();
        let local = self.snapshot();
        match resolve_fork(&local, remote) {
            Ok(ForkChoice::KeepLocal) => Ok(outcome),
            Ok(ForkChoice::AdoptRemote {
                state,
                fork_height,
                orphaned,
            }) => {
                let applied = state.len() - fork_height;
                tracing::warn!(node = %self.id, %peer, fork_height, new_tip = state.tip_height(), "switching to longer branch");
                self.ledger.replace(state, fork_height)?;
                self.prune_pending();
                for tx in orphaned {
                    if self.add_pending(tx).unwrap_or(false) {
                        outcome.requeued += 1;
                    }
                }
                outcome.applied += applied;
                outcome.reorganized = true;
                Ok(outcome)
            }
            Err(ForkError::InvalidRemote { height, error }) => {
                self.flag(peer, format!("sync: invalid branch at height {height}: {error}"));
                Err(NetworkError::InvalidBlock {
                    peer,
                    height,
                    error,
                })
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Syncs with every active peer, returning per-peer results.
    pub fn sync_all(&self) -> Vec<(NodeId, Result<SyncOutcome, NetworkError>)> {
        self.active_peers()
            .into_iter()
            .map(|p| (p, self.sync_with_peer(p)))
            .collect()
    }
}
