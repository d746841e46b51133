use anchorledger::ledger::{Block, ChainState, LedgerTransaction};
use anchorledger::Hash32;
use serde_json::{json, Value};

/// What `GET /explorer/{selector}` can address.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    Latest,
    Height(u64),
    /// A block hash or a transaction id; blocks are tried first.
    Hash(Hash32),
}

impl Selector {
    pub fn parse(raw: &str) -> Option<Self> {
        if raw == "latest" {
            return Some(Selector::Latest);
        }
        if !raw.is_empty() && raw.len() <= 20 && raw.bytes().all(|b| b.is_ascii_digit()) {
            return raw.parse().ok().map(Selector::Height);
        }
        Hash32::from_hex(raw.strip_prefix("0x").unwrap_or(raw)).ok().map(Selector::Hash)
    }
}

pub fn block_document(block: &Block) -> Value {
    let h = &block.header;
    json!({
        "type": "block",
        "height": h.height,
        "hash": block.hash().to_hex(),
        "prevHash": h.prev_hash.to_hex(),
        "txRoot": h.tx_root.to_hex(),
        "timestamp": h.timestamp,
        "nonce": h.nonce,
        "miner": h.miner.to_string(),
        "transactions": block.transactions.iter().map(|t| t.tx_id().to_hex()).collect::<Vec<_>>(),
    })
}

pub fn tx_document(tx: &LedgerTransaction, height: u64, block_hash: Hash32) -> Value {
    json!({
        "type": "transaction",
        "txId": tx.tx_id().to_hex(),
        "kind": tx.kind(),
        "sender": tx.sender().to_string(),
        "createdMs": tx.created_ms(),
        "height": height,
        "blockHash": block_hash.to_hex(),
        "payload": tx.payload(),
    })
}

/// Resolves `selector` against `chain`.
pub fn lookup(chain: &ChainState, selector: &Selector) -> Option<Value> {
    match selector {
        Selector::Latest => Some(block_document(chain.tip())),
        Selector::Height(h) => chain.block(*h).map(block_document),
        Selector::Hash(hash) => {
            if let Some(h) = chain.height_of(hash) {
                return chain.block(h).map(block_document);
            }
            let (tx, loc) = chain.transaction(hash)?;
            Some(tx_document(tx, loc.height, chain.block_hash(loc.height)?))
        }
    }
}
