use serde::{Deserialize, Serialize};

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{Address, NodeId};
use crate::hash::{sha256d, BlockHash, Hash32};

use super::tx::LedgerTransaction;

/// Proof-of-work target: the number of leading `0` hex characters a block
/// hash must start with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Difficulty(pub u32);

impl Default for Difficulty {
    fn default() -> Self {
        Difficulty(2)
    }
}

impl Difficulty {
    pub fn is_met_by(self, hash: &BlockHash) -> bool {
        hash.leading_zero_nibbles() >= self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_hash: BlockHash,
    pub tx_root: Hash32,
    /// Unix epoch seconds, taken from the miner's clock.
    pub timestamp: u64,
    pub nonce: u64,
    pub miner: NodeId,
}

impl BlockHeader {
    /// `height:u64 | prev_hash:bytes(32) | tx_root:bytes(32) | timestamp:u64 |
    /// nonce:u64 | miner:bytes(20)`
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u64(self.height)
            .put_hash(&self.prev_hash)
            .put_hash(&self.tx_root)
            .put_u64(self.timestamp)
            .put_u64(self.nonce)
            .put_bytes(self.miner.as_bytes());
        w.into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let header = BlockHeader {
            height: r.u64()?,
            prev_hash: r.hash()?,
            tx_root: r.hash()?,
            timestamp: r.u64()?,
            nonce: r.u64()?,
            miner: Address(r.fixed::<20>()?),
        };
        r.finish()?;
        Ok(header)
    }

    pub fn hash(&self) -> BlockHash {
        compute_block_hash(self)
    }
}

/// Double SHA-256 of the canonical header encoding.
pub fn compute_block_hash(header: &BlockHeader) -> BlockHash {
    sha256d(&header.encode())
}

/// Merkle root over the transaction list. Leaves and interior nodes are
/// domain-separated (`0x00` / `0x01` prefixes) and an odd node is promoted
/// unchanged, so no two distinct lists share a root. The empty list has the
/// all-zero root.
pub fn merkle_root(txs: &[LedgerTransaction]) -> Hash32 {
    if txs.is_empty() {
        return Hash32::ZERO;
    }
    let mut level: Vec<Hash32> = txs
        .iter()
        .map(|tx| {
            let mut buf = Vec::with_capacity(33);
            buf.push(0x00);
            buf.extend_from_slice(tx.leaf_hash().as_bytes());
            sha256d(&buf)
        })
        .collect();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| match pair {
                [l, r] => {
                    let mut buf = Vec::with_capacity(65);
                    buf.push(0x01);
                    buf.extend_from_slice(l.as_bytes());
                    buf.extend_from_slice(r.as_bytes());
                    sha256d(&buf)
                }
                [single] => *single,
                _ => unreachable!(),
            })
            .collect();
    }
    level[0]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    pub transactions: Vec<LedgerTransaction>,
}

impl Block {
    pub fn hash(&self) -> BlockHash {
        self.header.hash()
    }

    pub fn height(&self) -> u64 {
        self.header.height
    }

    /// `header:bytes | tx_count:u32 | tx:bytes ...`
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_bytes(&self.header.encode())
            .put_u32(self.transactions.len() as u32);
        for tx in &self.transactions {
            w.put_bytes(&tx.encode());
        }
        w.into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let header = BlockHeader::decode(r.bytes()?)?;
        let count = r.u32()? as usize;
        // every encoded tx needs well over 4 bytes; bound the allocation
        if count > r.remaining() / 4 {
            return Err(DecodeError::UnexpectedEof);
        }
        let mut transactions = Vec::with_capacity(count);
        for _ in 0..count {
            transactions.push(LedgerTransaction::decode(r.bytes()?)?);
        }
        r.finish()?;
        Ok(Block {
            header,
            transactions,
        })
    }

    pub fn computed_tx_root(&self) -> Hash32 {
        merkle_root(&self.transactions)
    }
}

/// Searches nonces from 0 upward until the header hash meets `difficulty`.
pub fn solve_proof_of_work(mut header: BlockHeader, difficulty: Difficulty) -> BlockHeader {
    header.nonce = 0;
    loop {
        if difficulty.is_met_by(&header.hash()) {
            return header;
        }
        header.nonce = header
            .nonce
            .checked_add(1)
            .expect("nonce space exhausted");
    }
}
