use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::crypto::Address;
use crate::hash::Hash32;

use super::eth::UnsignedTransaction;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// The endpoint could not be reached. Only this kind triggers failover.
    #[error("connection error: {0}")]
    Connection(String),
    /// The endpoint answered and refused the request.
    #[error("rejected: {0}")]
    Rejected(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub block_height: u64,
    pub success: bool,
    pub gas_used: u64,
}

/// The calls the anchoring workflow needs from a public chain. Implemented
/// by the in-process mock and by the JSON-RPC client in the service crate.
pub trait PublicChainBackend: Send + Sync {
    /// Identifier shown in anchor records and used to pick a backend.
    fn id(&self) -> &str;
    /// Next usable nonce, counting the sender's pending transactions.
    fn get_nonce(&self, address: &Address) -> Result<u64, BackendError>;
    fn get_balance(&self, address: &Address) -> Result<u128, BackendError>;
    fn estimate_gas(&self, from: &Address, tx: &UnsignedTransaction) -> Result<u64, BackendError>;
    fn gas_price(&self) -> Result<u128, BackendError>;
    fn send_raw_transaction(&self, raw: &[u8]) -> Result<Hash32, BackendError>;
    fn get_receipt(&self, tx_hash: &Hash32) -> Result<Option<Receipt>, BackendError>;
    /// Raw signed bytes of a transaction the backend has seen.
    fn get_raw_transaction(&self, tx_hash: &Hash32) -> Result<Option<Vec<u8>>, BackendError>;
    fn head_height(&self) -> Result<u64, BackendError>;
}

impl std::fmt::Debug for dyn PublicChainBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Backend({})", self.id())
    }
}

pub type SharedBackend = Arc<dyn PublicChainBackend>;
