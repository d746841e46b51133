use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use serde::Serialize;

use crate::crypto::{NodeId, SecretKey};
use crate::hash::{BlockHash, Hash32, TxId};

use super::block::{merkle_root, solve_proof_of_work, Block, BlockHeader, Difficulty};
use super::error::{BlockError, LedgerError, TxError};
use super::tx::{LedgerTransaction, TxPayload};
use super::types::{AssetRecord, Md5Index, Permission, PermissionGrant, Permissions};

/// A confirmed asset together with where it was confirmed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssetView {
    pub record: AssetRecord,
    pub issue_tx_id: TxId,
    pub height: u64,
    pub block_hash: BlockHash,
    /// Timestamp (epoch seconds) of the containing block.
    pub block_time: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TxLocation {
    pub height: u64,
    pub index: usize,
}

/// The private chain and the state derived from it.
///
/// The asset index, permission table and transaction index are a pure fold
/// over `blocks`: [`ChainState::replay`] rebuilds them from scratch and must
/// agree with the incrementally maintained copy.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    blocks: Vec<Arc<Block>>,
    hashes: Vec<BlockHash>,
    asset_index: HashMap<Md5Index, AssetView>,
    permission_table: BTreeMap<NodeId, Permissions>,
    tx_index: HashMap<TxId, TxLocation>,
    difficulty: Difficulty,
}

/// Builds the genesis block: a single self-grant of every permission to the
/// master node.
pub fn create_genesis(master: &SecretKey, timestamp: u64, difficulty: Difficulty) -> Block {
    let id = master.address();
    let grant = PermissionGrant {
        subject: id,
        permissions: Permissions::all(),
        granted: true,
        issuer: id,
    };
    let tx = LedgerTransaction::sign(master, timestamp * 1000, TxPayload::PermissionSet(grant));
    let transactions = vec![tx];
    let header = BlockHeader {
        height: 0,
        prev_hash: Hash32::ZERO,
        tx_root: merkle_root(&transactions),
        timestamp,
        nonce: 0,
        miner: id,
    };
    Block {
        header: solve_proof_of_work(header, difficulty),
        transactions,
    }
}

impl ChainState {
    pub fn from_genesis(genesis: Block, difficulty: Difficulty) -> Result<Self, BlockError> {
        check_genesis(&genesis, difficulty)?;
        let mut state = ChainState {
            blocks: Vec::new(),
            hashes: Vec::new(),
            asset_index: HashMap::new(),
            permission_table: BTreeMap::new(),
            tx_index: HashMap::new(),
            difficulty,
        };
        state.commit(genesis);
        Ok(state)
    }

    /// Rebuilds state from a raw block list. The error carries the height of
    /// the first block that failed.
    pub fn replay(blocks: &[Block], difficulty: Difficulty) -> Result<Self, (u64, BlockError)> {
        let (genesis, rest) = blocks
            .split_first()
            .ok_or((0, BlockError::InvalidGenesis("empty chain")))?;
        let mut state = ChainState::from_genesis(genesis.clone(), difficulty).map_err(|e| (0, e))?;
        for (i, block) in rest.iter().enumerate() {
            state
                .append_block(block.clone())
                .map_err(|e| (i as u64 + 1, e))?;
        }
        Ok(state)
    }

    pub fn difficulty(&self) -> Difficulty {
        self.difficulty
    }

    pub fn len(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("chain always has a genesis block")
    }

    pub fn tip_hash(&self) -> BlockHash {
        *self.hashes.last().expect("chain always has a genesis block")
    }

    pub fn tip_height(&self) -> u64 {
        self.len() - 1
    }

    pub fn genesis_hash(&self) -> BlockHash {
        self.hashes[0]
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        self.blocks.get(height as usize).map(|b| b.as_ref())
    }

    pub fn block_hash(&self, height: u64) -> Option<BlockHash> {
        self.hashes.get(height as usize).copied()
    }

    pub fn height_of(&self, hash: &BlockHash) -> Option<u64> {
        self.hashes.iter().position(|h| h == hash).map(|h| h as u64)
    }

    pub fn blocks(&self) -> impl ExactSizeIterator<Item = &Block> + '_ {
        self.blocks.iter().map(|b| b.as_ref())
    }

    pub fn to_blocks(&self) -> Vec<Block> {
        self.blocks().cloned().collect()
    }

    pub fn permissions_of(&self, node: &NodeId) -> Permissions {
        self.permission_table.get(node).copied().unwrap_or_default()
    }

    pub fn has_permission(&self, node: &NodeId, p: Permission) -> bool {
        self.permissions_of(node).contains(p)
    }

    pub fn permission_table(&self) -> &BTreeMap<NodeId, Permissions> {
        &self.permission_table
    }

    pub fn asset_count(&self) -> usize {
        self.asset_index.len()
    }

    pub fn transaction(&self, id: &TxId) -> Option<(&LedgerTransaction, TxLocation)> {
        let loc = *self.tx_index.get(id)?;
        let tx = &self.blocks[loc.height as usize].transactions[loc.index];
        Some((tx, loc))
    }

    pub fn contains_tx(&self, id: &TxId) -> bool {
        self.tx_index.contains_key(id)
    }

    /// Looks up a confirmed asset. Not-found is `None`, never an error.
    pub fn query_asset(&self, md5: &Md5Index) -> Option<&AssetView> {
        self.asset_index.get(md5)
    }

    /// Like [`query_asset`](Self::query_asset) but validates the index first.
    pub fn query_asset_str(&self, md5: &str) -> Result<Option<&AssetView>, LedgerError> {
        let md5 = Md5Index::parse(md5)?;
        Ok(self.asset_index.get(&md5))
    }

    /// Follows `parent_md5` links from `md5` back to its root asset.
    pub fn lineage(&self, md5: &Md5Index) -> Vec<&AssetView> {
        let mut out = Vec::new();
        let mut cur = self.asset_index.get(md5);
        while let Some(view) = cur {
            out.push(view);
            // parents always sit at an earlier chain position, so this ends
            cur = view
                .record
                .parent_md5
                .as_ref()
                .and_then(|p| self.asset_index.get(p));
        }
        out
    }

    /// Hash and height of the block `confirm_depth` blocks behind the tip.
    pub fn latest_confirmed_blockhash(
        &self,
        confirm_depth: u64,
    ) -> Result<(BlockHash, u64), LedgerError> {
        if self.len() <= confirm_depth {
            return Err(LedgerError::InsufficientDepth {
                len: self.len(),
                depth: confirm_depth,
            });
        }
        let height = self.tip_height() - confirm_depth;
        Ok((self.hashes[height as usize], height))
    }

    /// Checks one transaction against this state plus the effects of the
    /// transactions `staged` ahead of it in the same block.
    fn check_tx(&self, tx: &LedgerTransaction, staged: &Staged) -> Result<(), TxError> {
        if !tx.verify_signature() {
            return Err(TxError::BadSignature(tx.sender()));
        }
        if self.tx_index.contains_key(&tx.tx_id()) || staged.tx_ids.contains(&tx.tx_id()) {
            return Err(TxError::DuplicateTx(tx.tx_id()));
        }
        let required = tx.kind().required_permission();
        if !self.has_permission(&tx.sender(), required) {
            return Err(TxError::PermissionDenied {
                node: tx.sender(),
                required,
            });
        }
        match tx.payload() {
            TxPayload::AssetIssue(asset) => {
                let md5 = &asset.md5_index;
                if self.asset_index.contains_key(md5) || staged.assets.contains(md5) {
                    return Err(TxError::DuplicateAsset(md5.clone()));
                }
                if let Some(parent) = &asset.parent_md5 {
                    if !self.asset_index.contains_key(parent) && !staged.assets.contains(parent) {
                        return Err(TxError::UnknownParent(parent.clone()));
                    }
                }
            }
            TxPayload::PermissionSet(grant) => {
                if grant.issuer != tx.sender() {
                    return Err(TxError::IssuerMismatch {
                        issuer: grant.issuer,
                        sender: tx.sender(),
                    });
                }
            }
            TxPayload::NodeEvent(_) => {}
        }
        Ok(())
    }

    fn check_transactions(&self, txs: &[LedgerTransaction]) -> Result<(), (usize, TxError)> {
        let mut staged = Staged::default();
        for (i, tx) in txs.iter().enumerate() {
            self.check_tx(tx, &staged).map_err(|e| (i, e))?;
            staged.push(tx);
        }
        Ok(())
    }

    /// Admission check for a single candidate (e.g. a pending-pool entry)
    /// given the transactions already accepted ahead of it.
    pub fn check_candidate(
        &self,
        tx: &LedgerTransaction,
        ahead: &[LedgerTransaction],
    ) -> Result<(), TxError> {
        let mut staged = Staged::default();
        for t in ahead {
            staged.push(t);
        }
        self.check_tx(tx, &staged)
    }

    /// Validates `block` against the tip and applies it. All-or-nothing: on
    /// error the state is untouched.
    pub fn append_block(&mut self, block: Block) -> Result<(), BlockError> {
        let h = &block.header;
        let parent = self.tip();
        if h.prev_hash != self.tip_hash() {
            return Err(BlockError::StaleParent {
                expected: self.tip_hash(),
                got: h.prev_hash,
            });
        }
        if h.height != parent.header.height + 1 {
            return Err(BlockError::HeightMismatch {
                expected: parent.header.height + 1,
                got: h.height,
            });
        }
        if h.timestamp < parent.header.timestamp {
            return Err(BlockError::TimestampRegression {
                parent: parent.header.timestamp,
                got: h.timestamp,
            });
        }
        if block.computed_tx_root() != h.tx_root {
            return Err(BlockError::TxRootMismatch);
        }
        let hash = block.hash();
        if !self.difficulty.is_met_by(&hash) {
            return Err(BlockError::InvalidProof(hash));
        }
        if !self.has_permission(&h.miner, Permission::Mine) {
            return Err(BlockError::MinerNotPermitted(h.miner));
        }
        self.check_transactions(&block.transactions)
            .map_err(|(index, reason)| BlockError::InvalidTransaction {
                index,
                tx_id: block.transactions[index].tx_id(),
                reason,
            })?;
        self.commit(block);
        Ok(())
    }

    /// Assembles and mines the next block from `pending`. Every transaction
    /// must be admissible; the first offender is reported.
    pub fn mine_block(
        &self,
        pending: Vec<LedgerTransaction>,
        miner: NodeId,
        now: u64,
    ) -> Result<Block, LedgerError> {
        if !self.has_permission(&miner, Permission::Mine) {
            return Err(BlockError::MinerNotPermitted(miner).into());
        }
        self.check_transactions(&pending)
            .map_err(|(index, reason)| LedgerError::PendingRejected {
                index,
                tx_id: pending[index].tx_id(),
                reason,
            })?;
        let parent = &self.tip().header;
        let header = BlockHeader {
            height: parent.height + 1,
            prev_hash: self.tip_hash(),
            tx_root: merkle_root(&pending),
            timestamp: now.max(parent.timestamp),
            nonce: 0,
            miner,
        };
        Ok(Block {
            header: solve_proof_of_work(header, self.difficulty),
            transactions: pending,
        })
    }

    /// Builds a signed `asset_issue` transaction after checking the issuer's
    /// send permission and that the index is fresh on chain and in `pending`.
    pub fn issue_asset_tx<'a>(
        &self,
        asset: AssetRecord,
        issuer: &SecretKey,
        created_ms: u64,
        pending: impl IntoIterator<Item = &'a LedgerTransaction>,
    ) -> Result<LedgerTransaction, LedgerError> {
        let sender = issuer.address();
        if !self.has_permission(&sender, Permission::Send) {
            return Err(TxError::PermissionDenied {
                node: sender,
                required: Permission::Send,
            }
            .into());
        }
        let mut pending_assets = HashSet::new();
        for tx in pending {
            if let Some(a) = tx.asset() {
                pending_assets.insert(a.md5_index.clone());
            }
        }
        if self.asset_index.contains_key(&asset.md5_index)
            || pending_assets.contains(&asset.md5_index)
        {
            return Err(TxError::DuplicateAsset(asset.md5_index).into());
        }
        if let Some(parent) = &asset.parent_md5 {
            if !self.asset_index.contains_key(parent) && !pending_assets.contains(parent) {
                return Err(TxError::UnknownParent(parent.clone()).into());
            }
        }
        Ok(LedgerTransaction::sign(
            issuer,
            created_ms,
            TxPayload::AssetIssue(asset),
        ))
    }

    /// Builds a signed `permission_set` transaction; the issuer must hold admin.
    pub fn set_permission_tx(
        &self,
        subject: NodeId,
        permissions: Permissions,
        granted: bool,
        issuer: &SecretKey,
        created_ms: u64,
    ) -> Result<LedgerTransaction, LedgerError> {
        let id = issuer.address();
        if !self.has_permission(&id, Permission::Admin) {
            return Err(TxError::PermissionDenied {
                node: id,
                required: Permission::Admin,
            }
            .into());
        }
        let grant = PermissionGrant {
            subject,
            permissions,
            granted,
            issuer: id,
        };
        Ok(LedgerTransaction::sign(
            issuer,
            created_ms,
            TxPayload::PermissionSet(grant),
        ))
    }

    fn commit(&mut self, block: Block) {
        let height = block.header.height;
        let hash = block.hash();
        let time = block.header.timestamp;
        let mut grants = Vec::new();
        for (index, tx) in block.transactions.iter().enumerate() {
            self.tx_index
                .insert(tx.tx_id(), TxLocation { height, index });
            match tx.payload() {
                TxPayload::AssetIssue(asset) => {
                    self.asset_index.insert(
                        asset.md5_index.clone(),
                        AssetView {
                            record: asset.clone(),
                            issue_tx_id: tx.tx_id(),
                            height,
                            block_hash: hash,
                            block_time: time,
                        },
                    );
                }
                TxPayload::PermissionSet(g) => grants.push(g.clone()),
                TxPayload::NodeEvent(_) => {}
            }
        }
        // grants take effect from the next block on
        for g in grants {
            let entry = self.permission_table.entry(g.subject).or_default();
            *entry = if g.granted {
                entry.union(g.permissions)
            } else {
                entry.difference(g.permissions)
            };
        }
        self.blocks.push(Arc::new(block));
        self.hashes.push(hash);
    }
}

#[derive(Default)]
struct Staged {
    tx_ids: HashSet<TxId>,
    assets: HashSet<Md5Index>,
}

impl Staged {
    fn push(&mut self, tx: &LedgerTransaction) {
        self.tx_ids.insert(tx.tx_id());
        if let Some(a) = tx.asset() {
            self.assets.insert(a.md5_index.clone());
        }
    }
}

fn check_genesis(block: &Block, difficulty: Difficulty) -> Result<(), BlockError> {
    let h = &block.header;
    if h.height != 0 {
        return Err(BlockError::InvalidGenesis("height must be 0"));
    }
    if h.prev_hash != Hash32::ZERO {
        return Err(BlockError::InvalidGenesis("prev_hash must be zero"));
    }
    if block.computed_tx_root() != h.tx_root {
        return Err(BlockError::TxRootMismatch);
    }
    let hash = block.hash();
    if !difficulty.is_met_by(&hash) {
        return Err(BlockError::InvalidProof(hash));
    }
    let [tx] = block.transactions.as_slice() else {
        return Err(BlockError::InvalidGenesis("expected exactly one transaction"));
    };
    let TxPayload::PermissionSet(grant) = tx.payload() else {
        return Err(BlockError::InvalidGenesis("expected the master permission grant"));
    };
    let bootstrap = grant.granted
        && grant.permissions == Permissions::all()
        && grant.subject == h.miner
        && grant.issuer == h.miner
        && tx.sender() == h.miner;
    if !bootstrap {
        return Err(BlockError::InvalidGenesis(
            "grant must give every permission to the miner",
        ));
    }
    if !tx.verify_signature() {
        return Err(BlockError::InvalidTransaction {
            index: 0,
            tx_id: tx.tx_id(),
            reason: TxError::BadSignature(tx.sender()),
        });
    }
    Ok(())
}
