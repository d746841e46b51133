use serde::Serialize;

use crate::hash::BlockHash;

use super::block::{Block, Difficulty};
use super::error::BlockError;
use super::state::ChainState;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationFailure {
    pub height: u64,
    pub reason: String,
    #[serde(skip)]
    pub error: BlockError,
}

/// Outcome of replaying a chain from genesis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub blocks_checked: u64,
    /// Hash of the last block that passed; `None` when genesis failed.
    pub tip: Option<BlockHash>,
    pub failure: Option<ValidationFailure>,
}

impl ValidationReport {
    fn ok(n: u64, tip: BlockHash) -> Self {
        ValidationReport {
            valid: true,
            blocks_checked: n,
            tip: Some(tip),
            failure: None,
        }
    }

    fn failed(height: u64, error: BlockError, blocks: &[Block]) -> Self {
        let tip = height
            .checked_sub(1)
            .and_then(|h| blocks.get(h as usize))
            .map(Block::hash);
        ValidationReport {
            valid: false,
            blocks_checked: height,
            tip,
            failure: Some(ValidationFailure {
                height,
                reason: error.to_string(),
                error,
            }),
        }
    }

    pub fn failed_at(&self) -> Option<u64> {
        self.failure.as_ref().map(|f| f.height)
    }
}

/// Replays `blocks` from genesis, checking links, proof of work, signatures,
/// permissions and asset uniqueness. Stops at the first failure.
pub fn validate_chain(blocks: &[Block], difficulty: Difficulty) -> ValidationReport {
    match ChainState::replay(blocks, difficulty) {
        Ok(state) => ValidationReport::ok(state.len(), state.tip_hash()),
        Err((height, e)) => ValidationReport::failed(height, e, blocks),
    }
}

/// Same as [`validate_chain`] over stored encodings; a record that does not
/// decode fails at its own height.
pub fn validate_encoded_chain<B: AsRef<[u8]>>(
    records: &[B],
    difficulty: Difficulty,
) -> ValidationReport {
    let mut blocks = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        match Block::decode(rec.as_ref()) {
            Ok(b) => blocks.push(b),
            Err(e) => {
                // report an earlier semantic failure first, if there is one
                let prefix = validate_chain(&blocks, difficulty);
                if !prefix.valid && !blocks.is_empty() {
                    return prefix;
                }
                return ValidationReport::failed(i as u64, e.into(), &blocks);
            }
        }
    }
    if blocks.is_empty() {
        return ValidationReport::failed(0, BlockError::InvalidGenesis("empty chain"), &[]);
    }
    validate_chain(&blocks, difficulty)
}
