use crate::codec::DecodeError;
use crate::crypto::NodeId;
use crate::hash::{BlockHash, TxId};

use super::types::{FieldError, Md5Index, Permission};

/// Why a single transaction is not admissible against a chain state.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TxError {
    #[error("signature does not recover to sender {0}")]
    BadSignature(NodeId),
    #[error("{node} lacks {required} permission")]
    PermissionDenied { node: NodeId, required: Permission },
    #[error("asset {0} already issued")]
    DuplicateAsset(Md5Index),
    #[error("parent asset {0} is not on chain")]
    UnknownParent(Md5Index),
    #[error("transaction {0} already on chain")]
    DuplicateTx(TxId),
    #[error("grant issuer {issuer} differs from sender {sender}")]
    IssuerMismatch { issuer: NodeId, sender: NodeId },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BlockError {
    #[error("stale parent: block builds on {got}, tip is {expected}")]
    StaleParent { expected: BlockHash, got: BlockHash },
    #[error("expected height {expected}, block claims {got}")]
    HeightMismatch { expected: u64, got: u64 },
    #[error("block hash {0} does not meet the difficulty target")]
    InvalidProof(BlockHash),
    #[error("tx_root does not match the transaction list")]
    TxRootMismatch,
    #[error("timestamp {got} precedes parent timestamp {parent}")]
    TimestampRegression { parent: u64, got: u64 },
    #[error("miner {0} lacks mine permission")]
    MinerNotPermitted(NodeId),
    #[error("transaction {index} ({tx_id}) rejected: {reason}")]
    InvalidTransaction {
        index: usize,
        tx_id: TxId,
        reason: TxError,
    },
    #[error("invalid genesis: {0}")]
    InvalidGenesis(&'static str),
    #[error("undecodable block: {0}")]
    Decode(#[from] DecodeError),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Block(#[from] BlockError),
    #[error(transparent)]
    Tx(#[from] TxError),
    #[error("pending transaction {index} ({tx_id}) rejected: {reason}")]
    PendingRejected {
        index: usize,
        tx_id: TxId,
        reason: TxError,
    },
    #[error("chain has {len} blocks, confirm depth {depth} needs more")]
    InsufficientDepth { len: u64, depth: u64 },
    #[error("block log: {0}")]
    Storage(String),
}
