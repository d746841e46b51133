use serde::Serialize;

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{Address, NodeId, SecretKey, Signature};
use crate::hash::{sha256d, Hash32, TxId};

use super::types::{AssetRecord, NodeEvent, Permission, PermissionGrant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TxKind {
    AssetIssue,
    PermissionSet,
    NodeEvent,
}

impl TxKind {
    fn tag(self) -> u8 {
        match self {
            TxKind::AssetIssue => 1,
            TxKind::PermissionSet => 2,
            TxKind::NodeEvent => 3,
        }
    }

    fn from_tag(tag: u8) -> Result<Self, DecodeError> {
        match tag {
            1 => Ok(TxKind::AssetIssue),
            2 => Ok(TxKind::PermissionSet),
            3 => Ok(TxKind::NodeEvent),
            _ => Err(DecodeError::InvalidValue("transaction kind")),
        }
    }

    /// Capability the sender must hold for a transaction of this kind to be
    /// accepted into a block.
    pub fn required_permission(self) -> Permission {
        match self {
            TxKind::AssetIssue => Permission::Send,
            TxKind::PermissionSet => Permission::Admin,
            TxKind::NodeEvent => Permission::Connect,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TxPayload {
    AssetIssue(AssetRecord),
    PermissionSet(PermissionGrant),
    NodeEvent(NodeEvent),
}

impl TxPayload {
    pub fn kind(&self) -> TxKind {
        match self {
            TxPayload::AssetIssue(_) => TxKind::AssetIssue,
            TxPayload::PermissionSet(_) => TxKind::PermissionSet,
            TxPayload::NodeEvent(_) => TxKind::NodeEvent,
        }
    }

    fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            TxPayload::AssetIssue(a) => a.encode(&mut w),
            TxPayload::PermissionSet(g) => g.encode(&mut w),
            TxPayload::NodeEvent(e) => {
                w.put_str(&e.event).put_str(&e.detail);
            }
        }
        w.into_bytes()
    }

    fn decode(kind: TxKind, bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let payload = match kind {
            TxKind::AssetIssue => TxPayload::AssetIssue(AssetRecord::decode(&mut r)?),
            TxKind::PermissionSet => TxPayload::PermissionSet(PermissionGrant::decode(&mut r)?),
            TxKind::NodeEvent => TxPayload::NodeEvent(NodeEvent {
                event: r.string()?,
                detail: r.string()?,
            }),
        };
        r.finish()?;
        Ok(payload)
    }
}

/// A signed private-chain transaction.
///
/// Body layout: `kind:u8 | sender:bytes(20) | created_ms:u64 | payload:bytes`.
/// The transaction id is the double SHA-256 of the body; the sender signs the
/// id. The full encoding appends `signature:bytes(65)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerTransaction {
    tx_id: TxId,
    sender: NodeId,
    created_ms: u64,
    payload: TxPayload,
    signature: Signature,
}

impl LedgerTransaction {
    /// Builds and signs a transaction. No permission checks happen here; see
    /// [`crate::ledger::ChainState::issue_asset_tx`] for the checked path.
    pub fn sign(key: &SecretKey, created_ms: u64, payload: TxPayload) -> Self {
        let sender = key.address();
        let tx_id = sha256d(&body_bytes(&sender, created_ms, &payload));
        let signature = key.sign_prehash(tx_id.as_bytes());
        LedgerTransaction {
            tx_id,
            sender,
            created_ms,
            payload,
            signature,
        }
    }

    pub fn tx_id(&self) -> TxId {
        self.tx_id
    }

    pub fn sender(&self) -> NodeId {
        self.sender
    }

    pub fn created_ms(&self) -> u64 {
        self.created_ms
    }

    pub fn payload(&self) -> &TxPayload {
        &self.payload
    }

    pub fn kind(&self) -> TxKind {
        self.payload.kind()
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn asset(&self) -> Option<&AssetRecord> {
        match &self.payload {
            TxPayload::AssetIssue(a) => Some(a),
            _ => None,
        }
    }

    /// True when the signature recovers to the declared sender.
    pub fn verify_signature(&self) -> bool {
        self.signature
            .recover(self.tx_id.as_bytes())
            .is_ok_and(|a| a == self.sender)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut body = body_bytes(&self.sender, self.created_ms, &self.payload);
        let mut w = Writer::new();
        w.put_bytes(&self.signature.to_bytes());
        body.extend_from_slice(&w.into_bytes());
        body
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let kind = TxKind::from_tag(r.u8()?)?;
        let sender = Address(r.fixed::<20>()?);
        let created_ms = r.u64()?;
        let payload = TxPayload::decode(kind, r.bytes()?)?;
        let signature = Signature::from_bytes(r.bytes()?)
            .map_err(|_| DecodeError::InvalidValue("signature"))?;
        r.finish()?;
        let tx_id = sha256d(&body_bytes(&sender, created_ms, &payload));
        Ok(LedgerTransaction {
            tx_id,
            sender,
            created_ms,
            payload,
            signature,
        })
    }

    /// Merkle leaf: commits to the whole encoding, signature included.
    pub fn leaf_hash(&self) -> Hash32 {
        sha256d(&self.encode())
    }
}

fn body_bytes(sender: &NodeId, created_ms: u64, payload: &TxPayload) -> Vec<u8> {
    let mut w = Writer::new();
    w.put_u8(payload.kind().tag())
        .put_bytes(sender.as_bytes())
        .put_u64(created_ms)
        .put_bytes(&payload.encode());
    w.into_bytes()
}
