//! Cross-checks a private chain against the anchor log.
//!
//! A block's own hash does not move when an earlier block is edited, so the
//! check walks the whole hash lineage (height, parent link, transaction
//! root) from genesis up to each anchored height before comparing hashes.

use serde::Serialize;

use crate::hash::{BlockHash, Hash32};
use crate::ledger::Block;

use super::backend::{BackendError, PublicChainBackend};
use super::eth::{decode_anchor_payload, SignedTransaction};
use super::log::{AnchorRecord, AnchorStatus};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MismatchKind {
    /// The chain is shorter than the anchored height.
    Missing { chain_len: u64 },
    /// The lineage leading to the anchored height is broken at `height`.
    BrokenLineage { height: u64 },
    /// The lineage is intact but ends in a different block.
    HashMismatch { found: BlockHash },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnchorMismatch {
    pub record_id: u64,
    pub private_height: u64,
    pub anchored_hash: BlockHash,
    pub kind: MismatchKind,
}

/// Block hashes plus the first height at which the lineage breaks.
struct Lineage {
    hashes: Vec<BlockHash>,
    broken_at: Option<u64>,
}

fn lineage<I: IntoIterator<Item = Option<Block>>>(blocks: I) -> Lineage {
    let mut hashes = Vec::new();
    let mut broken_at = None;
    for (i, block) in blocks.into_iter().enumerate() {
        let i = i as u64;
        let Some(block) = block else {
            broken_at.get_or_insert(i);
            hashes.push(Hash32::ZERO);
            continue;
        };
        let expected_prev = if i == 0 { Hash32::ZERO } else { hashes[i as usize - 1] };
        if broken_at.is_none()
            && (block.header.height != i
                || block.header.prev_hash != expected_prev
                || block.computed_tx_root() != block.header.tx_root)
        {
            broken_at = Some(i);
        }
        hashes.push(block.hash());
    }
    Lineage { hashes, broken_at }
}

fn compare(lineage: &Lineage, anchors: &[AnchorRecord]) -> Vec<AnchorMismatch> {
    anchors
        .iter()
        .filter(|a| a.status != AnchorStatus::Failed)
        .filter_map(|a| {
            let h = a.private_height;
            let kind = if h >= lineage.hashes.len() as u64 {
                MismatchKind::Missing {
                    chain_len: lineage.hashes.len() as u64,
                }
            } else if let Some(b) = lineage.broken_at.filter(|b| *b <= h) {
                MismatchKind::BrokenLineage { height: b }
            } else if lineage.hashes[h as usize] != a.private_blockhash {
                MismatchKind::HashMismatch {
                    found: lineage.hashes[h as usize],
                }
            } else {
                return None;
            };
            Some(AnchorMismatch {
                record_id: a.id,
                private_height: h,
                anchored_hash: a.private_blockhash,
                kind,
            })
        })
        .collect()
}

/// Every anchor the chain fails to reproduce. Empty means consistent.
pub fn check_anchors(blocks: &[Block], anchors: &[AnchorRecord]) -> Vec<AnchorMismatch> {
    compare(&lineage(blocks.iter().cloned().map(Some)), anchors)
}

/// As [`check_anchors`], over raw block records; a record that does not
/// decode breaks the lineage at its height.
pub fn check_anchors_encoded<B: AsRef<[u8]>>(records: &[B], anchors: &[AnchorRecord]) -> Vec<AnchorMismatch> {
    compare(
        &lineage(records.iter().map(|r| Block::decode(r.as_ref()).ok())),
        anchors,
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OnChainCheck {
    pub found: bool,
    pub payload_matches: bool,
    pub sender_matches: bool,
    pub value_is_zero: bool,
}

impl OnChainCheck {
    pub fn ok(&self) -> bool {
        self.found && self.payload_matches && self.sender_matches && self.value_is_zero
    }
}

/// Fetches the anchor transaction and checks it carries the recorded hash,
/// was signed by the recorded wallet and moved no value.
pub fn verify_anchor_on_chain(
    record: &AnchorRecord,
    backend: &dyn PublicChainBackend,
) -> Result<OnChainCheck, BackendError> {
    let Some(raw) = backend.get_raw_transaction(&record.eth_tx_hash)? else {
        return Ok(OnChainCheck {
            found: false,
            payload_matches: false,
            sender_matches: false,
            value_is_zero: false,
        });
    };
    let Ok(tx) = SignedTransaction::decode(&raw) else {
        return Ok(OnChainCheck {
            found: true,
            payload_matches: false,
            sender_matches: false,
            value_is_zero: false,
        });
    };
    Ok(OnChainCheck {
        found: true,
        payload_matches: decode_anchor_payload(&tx.tx.data) == Some(record.private_blockhash),
        sender_matches: tx.recover_sender().ok() == Some(record.wallet_address),
        value_is_zero: tx.tx.value == 0,
    })
}
