//! The permissioned private chain.
//!
//! Blocks carry signed transactions of three kinds: asset issuance,
//! permission changes and node events. Every node replays the same blocks
//! into the same [`ChainState`], so the derived asset index and permission
//! table are reproducible from the block list alone.

mod block;
mod error;
mod handle;
mod state;
pub mod store;
mod tx;
mod types;
mod validate;

pub use block::{
    compute_block_hash, merkle_root, solve_proof_of_work, Block, BlockHeader, Difficulty,
};
pub use error::{BlockError, LedgerError, TxError};
pub use handle::Ledger;
pub use state::{create_genesis, AssetView, ChainState, TxLocation};
pub use store::BlockLog;
pub use tx::{LedgerTransaction, TxKind, TxPayload};
pub use types::{
    AssetRecord, FieldError, Md5Index, NodeEvent, Permission, PermissionGrant, Permissions,
    Sha256Hex,
};
pub use validate::{validate_chain, validate_encoded_chain, ValidationFailure, ValidationReport};

/// Default number of blocks buried under the anchored block.
pub const DEFAULT_CONFIRM_DEPTH: u64 = 6;

#[cfg(test)]
mod tests;
