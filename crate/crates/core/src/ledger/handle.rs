use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use super::block::{Block, Difficulty};
use super::error::{BlockError, LedgerError};
use super::state::ChainState;
use super::store::BlockLog;

/// Shared handle to a node's chain.
///
/// Writes are serialized through one writer lock and publish a new
/// immutable [`ChainState`]; readers take an `Arc` snapshot and never block
/// on a writer for longer than the pointer swap.
#[derive(Debug)]
pub struct Ledger {
    current: RwLock<Arc<ChainState>>,
    writer: Mutex<Option<BlockLog>>,
}

impl Ledger {
    /// In-memory ledger starting at `genesis`.
    pub fn new(genesis: Block, difficulty: Difficulty) -> Result<Self, BlockError> {
        Ok(Ledger {
            current: RwLock::new(Arc::new(ChainState::from_genesis(genesis, difficulty)?)),
            writer: Mutex::new(None),
        })
    }

    /// Opens the block log in `dir`, replaying it. An empty log is seeded
    /// with `genesis`; a non-empty one must start with it.
    pub fn open(dir: &Path, genesis: Block, difficulty: Difficulty) -> Result<Self, LedgerError> {
        let storage = |e: std::io::Error| LedgerError::Storage(e.to_string());
        let (mut log, records) = BlockLog::open(dir).map_err(storage)?;
        let state = if records.is_empty() {
            log.append(&genesis).map_err(storage)?;
            ChainState::from_genesis(genesis, difficulty)?
        } else {
            let blocks = records
                .iter()
                .map(|r| Block::decode(r).map_err(BlockError::from))
                .collect::<Result<Vec<_>, _>>()?;
            if blocks[0].hash() != genesis.hash() {
                return Err(BlockError::InvalidGenesis("stored chain has a different genesis").into());
            }
            ChainState::replay(&blocks, difficulty).map_err(|(_, e)| e)?
        };
        Ok(Ledger {
            current: RwLock::new(Arc::new(state)),
            writer: Mutex::new(Some(log)),
        })
    }

    pub fn snapshot(&self) -> Arc<ChainState> {
        self.current.read().unwrap().clone()
    }

    /// Validates and appends `block`, persisting it before publishing.
    pub fn append(&self, block: Block) -> Result<Arc<ChainState>, LedgerError> {
        let mut log = self.writer.lock().unwrap();
        let mut next = (*self.snapshot()).clone();
        next.append_block(block.clone())?;
        if let Some(log) = log.as_mut() {
            log.append(&block)
                .map_err(|e| LedgerError::Storage(e.to_string()))?;
        }
        let next = Arc::new(next);
        *self.current.write().unwrap() = next.clone();
        Ok(next)
    }

    /// Swaps in a replacement chain that shares blocks `0..fork_height` with
    /// the current one.
    pub fn replace(&self, replacement: ChainState, fork_height: u64) -> Result<(), LedgerError> {
        let mut log = self.writer.lock().unwrap();
        let current = self.snapshot();
        debug_assert_eq!(
            current.block_hash(fork_height.saturating_sub(1)),
            replacement.block_hash(fork_height.saturating_sub(1))
        );
        if let Some(log) = log.as_mut() {
            let storage = |e: std::io::Error| LedgerError::Storage(e.to_string());
            log.truncate(fork_height).map_err(storage)?;
            for block in replacement.blocks().skip(fork_height as usize) {
                log.append(block).map_err(storage)?;
            }
        }
        *self.current.write().unwrap() = Arc::new(replacement);
        Ok(())
    }
}
