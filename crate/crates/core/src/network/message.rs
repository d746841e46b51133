use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{Address, NodeId, SecretKey, Signature};
use crate::hash::{sha256d, BlockHash, Hash32};
use crate::ledger::{Block, LedgerTransaction};

pub type Challenge = [u8; 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    Hello = 1,
    HelloAck = 2,
    TxBroadcast = 3,
    BlockBroadcast = 4,
    GetBlocks = 5,
    BlocksReply = 6,
    Ack = 7,
}

impl MessageKind {
    fn from_u8(b: u8) -> Result<Self, DecodeError> {
        Ok(match b {
            1 => MessageKind::Hello,
            2 => MessageKind::HelloAck,
            3 => MessageKind::TxBroadcast,
            4 => MessageKind::BlockBroadcast,
            5 => MessageKind::GetBlocks,
            6 => MessageKind::BlocksReply,
            7 => MessageKind::Ack,
            _ => return Err(DecodeError::InvalidValue("message kind")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckStatus {
    Accepted = 0,
    /// Already held; nothing changed.
    Duplicate = 1,
    /// The block does not extend the receiver's tip; the sender is ahead.
    NeedSync = 2,
    Rejected = 3,
}

impl AckStatus {
    fn from_u8(b: u8) -> Result<Self, DecodeError> {
        Ok(match b {
            0 => AckStatus::Accepted,
            1 => AckStatus::Duplicate,
            2 => AckStatus::NeedSync,
            3 => AckStatus::Rejected,
            _ => return Err(DecodeError::InvalidValue("ack status")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    /// `listen` is where the initiator accepts connections.
    Hello {
        challenge: Challenge,
        genesis: BlockHash,
        listen: String,
    },
    /// Echoes the peer's challenge. The initiator's first `HelloAck`
    /// carries no new challenge.
    HelloAck {
        echo: Challenge,
        challenge: Option<Challenge>,
        genesis: BlockHash,
    },
    TxBroadcast(LedgerTransaction),
    BlockBroadcast(Block),
    GetBlocks {
        from_height: u64,
        limit: u32,
    },
    BlocksReply(Vec<Block>),
    Ack {
        status: AckStatus,
        detail: String,
    },
}

impl Body {
    pub fn kind(&self) -> MessageKind {
        match self {
            Body::Hello { .. } => MessageKind::Hello,
            Body::HelloAck { .. } => MessageKind::HelloAck,
            Body::TxBroadcast(_) => MessageKind::TxBroadcast,
            Body::BlockBroadcast(_) => MessageKind::BlockBroadcast,
            Body::GetBlocks { .. } => MessageKind::GetBlocks,
            Body::BlocksReply(_) => MessageKind::BlocksReply,
            Body::Ack { .. } => MessageKind::Ack,
        }
    }

    pub fn ack(status: AckStatus, detail: impl Into<String>) -> Self {
        Body::Ack {
            status,
            detail: detail.into(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            Body::Hello {
                challenge,
                genesis,
                listen,
            } => {
                w.put_bytes(challenge).put_hash(genesis).put_str(listen);
            }
            Body::HelloAck {
                echo,
                challenge,
                genesis,
            } => {
                w.put_bytes(echo);
                match challenge {
                    Some(c) => w.put_u8(1).put_bytes(c),
                    None => w.put_u8(0),
                };
                w.put_hash(genesis);
            }
            Body::TxBroadcast(tx) => {
                w.put_bytes(&tx.encode());
            }
            Body::BlockBroadcast(b) => {
                w.put_bytes(&b.encode());
            }
            Body::GetBlocks { from_height, limit } => {
                w.put_u64(*from_height).put_u32(*limit);
            }
            Body::BlocksReply(blocks) => {
                w.put_u32(blocks.len() as u32);
                for b in blocks {
                    w.put_bytes(&b.encode());
                }
            }
            Body::Ack { status, detail } => {
                w.put_u8(*status as u8).put_str(detail);
            }
        }
        w.into_bytes()
    }

    pub fn decode(kind: MessageKind, bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let body = match kind {
            MessageKind::Hello => Body::Hello {
                challenge: r.fixed()?,
                genesis: r.hash()?,
                listen: r.string()?,
            },
            MessageKind::HelloAck => Body::HelloAck {
                echo: r.fixed()?,
                challenge: if r.bool()? { Some(r.fixed()?) } else { None },
                genesis: r.hash()?,
            },
            MessageKind::TxBroadcast => Body::TxBroadcast(LedgerTransaction::decode(r.bytes()?)?),
            MessageKind::BlockBroadcast => Body::BlockBroadcast(Block::decode(r.bytes()?)?),
            MessageKind::GetBlocks => Body::GetBlocks {
                from_height: r.u64()?,
                limit: r.u32()?,
            },
            MessageKind::BlocksReply => {
                let n = r.u32()? as usize;
                // each block needs at least its 4-byte length prefix
                if n > r.remaining() / 4 {
                    return Err(DecodeError::InvalidValue("block count"));
                }
                let mut blocks = Vec::with_capacity(n);
                for _ in 0..n {
                    blocks.push(Block::decode(r.bytes()?)?);
                }
                Body::BlocksReply(blocks)
            }
            MessageKind::Ack => Body::Ack {
                status: AckStatus::from_u8(r.u8()?)?,
                detail: r.string()?,
            },
        };
        r.finish()?;
        Ok(body)
    }
}

/// A signed envelope.
///
/// Wire layout: `kind u8 | sender bytes(20) | body bytes | signature bytes(65)`,
/// where the signature is over `sha256d(kind | sender bytes | body bytes)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub sender: NodeId,
    pub body: Body,
    pub signature: Signature,
}

fn signing_digest(kind: MessageKind, sender: &NodeId, body: &[u8]) -> Hash32 {
    let mut w = Writer::new();
    w.put_u8(kind as u8).put_bytes(&sender.0).put_bytes(body);
    sha256d(&w.into_bytes())
}

impl WireMessage {
    pub fn sign(key: &SecretKey, body: Body) -> Self {
        let sender = key.address();
        let digest = signing_digest(body.kind(), &sender, &body.encode());
        WireMessage {
            sender,
            signature: key.sign_prehash(digest.as_bytes()),
            body,
        }
    }

    pub fn kind(&self) -> MessageKind {
        self.body.kind()
    }

    /// True when the signature recovers to `sender`.
    pub fn verify(&self) -> bool {
        let digest = signing_digest(self.kind(), &self.sender, &self.body.encode());
        self.signature.recover(digest.as_bytes()).ok() == Some(self.sender)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u8(self.kind() as u8)
            .put_bytes(&self.sender.0)
            .put_bytes(&self.body.encode())
            .put_bytes(&self.signature.to_bytes());
        w.into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let kind = MessageKind::from_u8(r.u8()?)?;
        let sender = Address(r.fixed::<20>()?);
        let body = Body::decode(kind, r.bytes()?)?;
        let signature = Signature::from_bytes(r.bytes()?)
            .map_err(|_| DecodeError::InvalidValue("signature"))?;
        r.finish()?;
        Ok(WireMessage {
            sender,
            body,
            signature,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::Difficulty;
    use crate::testkit::{key, ChainBuilder};

    fn samples() -> Vec<Body> {
        let mut b = ChainBuilder::new(Difficulty(1));
        let mut seed = 0;
        b.extend_with_assets(3, 2, &mut seed);
        let blocks = b.state.to_blocks();
        let tx = blocks[1].transactions[0].clone();
        vec![
            Body::Hello {
                challenge: [7; 32],
                genesis: b.state.genesis_hash(),
                listen: "127.0.0.1:7001".into(),
            },
            Body::HelloAck {
                echo: [7; 32],
                challenge: Some([9; 32]),
                genesis: b.state.genesis_hash(),
            },
            Body::HelloAck {
                echo: [9; 32],
                challenge: None,
                genesis: b.state.genesis_hash(),
            },
            Body::TxBroadcast(tx),
            Body::BlockBroadcast(blocks[2].clone()),
            Body::GetBlocks {
                from_height: 3,
                limit: 100,
            },
            Body::BlocksReply(blocks),
            Body::BlocksReply(vec![]),
            Body::ack(AckStatus::NeedSync, "behind"),
        ]
    }

    #[test]
    fn round_trip_and_verify() {
        let k = key(3);
        for body in samples() {
            let msg = WireMessage::sign(&k, body);
            assert!(msg.verify());
            let bytes = msg.encode();
            assert_eq!(bytes[0], msg.kind() as u8);
            let back = WireMessage::decode(&bytes).unwrap();
            assert_eq!(back, msg);
            assert!(back.verify());
        }
    }

    #[test]
    fn spoofed_sender_fails_verification() {
        let mut msg = WireMessage::sign(&key(3), Body::ack(AckStatus::Accepted, ""));
        msg.sender = key(4).address();
        assert!(!msg.verify());
    }

    #[test]
    fn any_flip_is_rejected_or_unverifiable() {
        let msg = WireMessage::sign(
            &key(3),
            Body::GetBlocks {
                from_height: 1,
                limit: 2,
            },
        );
        let bytes = msg.encode();
        for i in 0..bytes.len() {
            let mut m = bytes.clone();
            m[i] ^= 0x80;
            if let Ok(decoded) = WireMessage::decode(&m) {
                assert!(!decoded.verify() || decoded == msg, "flip at {i} verified");
            }
        }
    }

    #[test]
    fn hostile_block_count_is_rejected() {
        let mut w = Writer::new();
        w.put_u32(u32::MAX);
        assert!(Body::decode(MessageKind::BlocksReply, &w.into_bytes()).is_err());
    }
}
