//! Legacy Ethereum transactions: RLP encoding, signing and sender recovery.

use rlp::{Rlp, RlpStream};
use serde::Serialize;

use crate::crypto::{keccak256, Address, CryptoError, SecretKey, Signature};
use crate::hash::{BlockHash, Hash32};

/// Base cost of any transaction.
pub const TX_BASE_GAS: u64 = 21_000;
/// Per non-zero data byte.
pub const TX_DATA_NONZERO_GAS: u64 = 68;
/// Per zero data byte.
pub const TX_DATA_ZERO_GAS: u64 = 4;

/// Minimum gas a transaction with `data` consumes before any execution.
pub fn intrinsic_gas(data: &[u8]) -> u64 {
    let zeros = data.iter().filter(|b| **b == 0).count() as u64;
    let nonzeros = data.len() as u64 - zeros;
    TX_BASE_GAS + nonzeros * TX_DATA_NONZERO_GAS + zeros * TX_DATA_ZERO_GAS
}

/// Anchor payload: the block hash as its 64 lowercase hex characters, sent
/// as ASCII bytes (so a hash `00ab..` travels as `0x3030...`).
pub fn anchor_payload(hash: &BlockHash) -> Vec<u8> {
    hash.to_hex().into_bytes()
}

/// Inverse of [`anchor_payload`]. Anything else yields `None`.
pub fn decode_anchor_payload(data: &[u8]) -> Option<BlockHash> {
    std::str::from_utf8(data).ok().and_then(|s| Hash32::from_hex(s).ok())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EthTxError {
    #[error("malformed RLP: {0}")]
    Rlp(String),
    #[error("expected a 9-item transaction list")]
    Shape,
    #[error("non-canonical signature component")]
    NonCanonical,
    #[error("invalid v value {0}")]
    InvalidV(u64),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

impl From<rlp::DecoderError> for EthTxError {
    fn from(e: rlp::DecoderError) -> Self {
        EthTxError::Rlp(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnsignedTransaction {
    pub nonce: u64,
    /// Wei per unit of gas.
    pub gas_price: u128,
    /// `startgas`: the gas limit.
    pub gas_limit: u64,
    pub to: Address,
    pub value: u128,
    #[serde(with = "hex_bytes")]
    pub data: Vec<u8>,
}

impl UnsignedTransaction {
    fn append_fields(&self, s: &mut RlpStream) {
        s.append(&self.nonce);
        s.append(&self.gas_price);
        s.append(&self.gas_limit);
        s.append(&self.to.0.to_vec());
        s.append(&self.value);
        s.append(&self.data);
    }

    /// Keccak-256 over the RLP list that gets signed: the six fields, plus
    /// `(chain_id, 0, 0)` when replay protection is on.
    pub fn signing_hash(&self, chain_id: Option<u64>) -> [u8; 32] {
        let mut s = RlpStream::new_list(if chain_id.is_some() { 9 } else { 6 });
        self.append_fields(&mut s);
        if let Some(id) = chain_id {
            s.append(&id);
            s.append(&0u8);
            s.append(&0u8);
        }
        keccak256(&s.out())
    }

    pub fn sign(&self, key: &SecretKey, chain_id: Option<u64>) -> SignedTransaction {
        let sig = key.sign_prehash(&self.signing_hash(chain_id));
        let v = match chain_id {
            Some(id) => id * 2 + 35 + sig.recovery_id as u64,
            None => 27 + sig.recovery_id as u64,
        };
        SignedTransaction {
            tx: self.clone(),
            v,
            r: sig.r,
            s: sig.s,
        }
    }

    /// Total wei the sender must be able to pay up front.
    pub fn max_cost(&self) -> u128 {
        self.gas_limit as u128 * self.gas_price + self.value
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SignedTransaction {
    #[serde(flatten)]
    pub tx: UnsignedTransaction,
    pub v: u64,
    #[serde(with = "hex_bytes")]
    pub r: [u8; 32],
    #[serde(with = "hex_bytes")]
    pub s: [u8; 32],
}

fn trim_leading_zeros(b: &[u8]) -> &[u8] {
    let first = b.iter().position(|x| *x != 0).unwrap_or(b.len());
    &b[first..]
}

fn left_pad_32(b: &[u8]) -> Result<[u8; 32], EthTxError> {
    if b.len() > 32 || b.first() == Some(&0) {
        return Err(EthTxError::NonCanonical);
    }
    let mut out = [0u8; 32];
    out[32 - b.len()..].copy_from_slice(b);
    Ok(out)
}

impl SignedTransaction {
    /// RLP of the nine-field signed list; this is what goes on the wire.
    pub fn raw(&self) -> Vec<u8> {
        let mut s = RlpStream::new_list(9);
        self.tx.append_fields(&mut s);
        s.append(&self.v);
        s.append(&trim_leading_zeros(&self.r).to_vec());
        s.append(&trim_leading_zeros(&self.s).to_vec());
        s.out().to_vec()
    }

    /// Keccak-256 of the raw bytes.
    pub fn hash(&self) -> Hash32 {
        Hash32(keccak256(&self.raw()))
    }

    pub fn decode(raw: &[u8]) -> Result<Self, EthTxError> {
        let rlp = Rlp::new(raw);
        if !rlp.is_list() || rlp.item_count()? != 9 {
            return Err(EthTxError::Shape);
        }
        if rlp.payload_info()?.total() != raw.len() {
            return Err(EthTxError::Rlp("trailing bytes".into()));
        }
        let to_bytes: Vec<u8> = rlp.val_at(3)?;
        let to = Address(
            to_bytes
                .as_slice()
                .try_into()
                .map_err(|_| EthTxError::Shape)?,
        );
        let tx = UnsignedTransaction {
            nonce: rlp.val_at(0)?,
            gas_price: rlp.val_at(1)?,
            gas_limit: rlp.val_at(2)?,
            to,
            value: rlp.val_at(4)?,
            data: rlp.val_at(5)?,
        };
        let r: Vec<u8> = rlp.val_at(7)?;
        let s: Vec<u8> = rlp.val_at(8)?;
        Ok(SignedTransaction {
            tx,
            v: rlp.val_at(6)?,
            r: left_pad_32(&r)?,
            s: left_pad_32(&s)?,
        })
    }

    /// `None` for legacy `v ∈ {27, 28}`; the EIP-155 chain id otherwise.
    pub fn chain_id(&self) -> Result<Option<u64>, EthTxError> {
        match self.v {
            27 | 28 => Ok(None),
            v if v >= 35 => Ok(Some((v - 35) / 2)),
            v => Err(EthTxError::InvalidV(v)),
        }
    }

    pub fn signature(&self) -> Result<Signature, EthTxError> {
        let recovery_id = match self.chain_id()? {
            None => self.v - 27,
            Some(_) => (self.v - 35) % 2,
        } as u8;
        Ok(Signature {
            r: self.r,
            s: self.s,
            recovery_id,
        })
    }

    pub fn recover_sender(&self) -> Result<Address, EthTxError> {
        let digest = self.tx.signing_hash(self.chain_id()?);
        Ok(self.signature()?.recover(&digest)?)
    }
}

pub(crate) mod hex_bytes {
    use serde::Serializer;

    pub fn serialize<S: Serializer, T: AsRef<[u8]>>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("0x{}", hex::encode(v.as_ref())))
    }
}
