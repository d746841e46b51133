//! secp256k1 keys, recoverable ECDSA signatures and Ethereum-style addresses.
//!
//! Both the private ledger (node identities, transaction signatures) and the
//! public-chain anchor use this one primitive.

use std::fmt;
use std::str::FromStr;

use k256::ecdsa::{RecoveryId, Signature as EcdsaSignature, SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha3::{Digest, Keccak256};

pub fn keccak256(data: &[u8]) -> [u8; 32] {
    Keccak256::digest(data).into()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("invalid secret key")]
    InvalidKey,
    #[error("invalid signature encoding")]
    InvalidSignature,
    #[error("public key recovery failed")]
    RecoveryFailed,
    #[error("invalid address: {0}")]
    InvalidAddress(String),
}

/// 20-byte account address: the last 20 bytes of keccak256 over the
/// uncompressed public key. Private-chain nodes are identified by the same
/// address form.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Address(pub [u8; 20]);

/// Identity of a private-chain node.
pub type NodeId = Address;

impl Address {
    pub fn from_verifying_key(key: &VerifyingKey) -> Self {
        let point = key.to_encoded_point(false);
        let digest = keccak256(&point.as_bytes()[1..]);
        let mut out = [0u8; 20];
        out.copy_from_slice(&digest[12..]);
        Address(out)
    }

    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({self})")
    }
}

impl FromStr for Address {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let body = s.strip_prefix("0x").unwrap_or(s);
        let mut out = [0u8; 20];
        hex::decode_to_slice(body, &mut out).map_err(|_| CryptoError::InvalidAddress(s.into()))?;
        Ok(Address(out))
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// A secp256k1 secret scalar. `Debug` never prints key material.
#[derive(Clone)]
pub struct SecretKey {
    inner: SigningKey,
}

impl SecretKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        SigningKey::from_slice(bytes)
            .map(|inner| Self { inner })
            .map_err(|_| CryptoError::InvalidKey)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let body = s.trim().strip_prefix("0x").unwrap_or(s.trim());
        let bytes = hex::decode(body).map_err(|_| CryptoError::InvalidKey)?;
        Self::from_bytes(&bytes)
    }

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self {
            inner: SigningKey::random(rng),
        }
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.inner.to_bytes().into()
    }

    pub fn address(&self) -> Address {
        Address::from_verifying_key(self.inner.verifying_key())
    }

    /// Deterministic (RFC 6979) signature over a 32-byte digest, with `s`
    /// normalized to the lower half of the group order.
    pub fn sign_prehash(&self, digest: &[u8; 32]) -> Signature {
        let (sig, recid) = self
            .inner
            .sign_prehash_recoverable(digest)
            .expect("signing a 32-byte digest with a valid key cannot fail");
        let (r, s) = sig.split_bytes();
        Signature {
            r: r.into(),
            s: s.into(),
            recovery_id: recid.to_byte(),
        }
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey({}, <redacted>)", self.address())
    }
}

/// Recoverable ECDSA signature: `r || s || recovery_id` (65 bytes).
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature {
    pub r: [u8; 32],
    pub s: [u8; 32],
    /// 0 or 1 (the y-parity of the ephemeral point).
    pub recovery_id: u8,
}

impl Signature {
    pub const LEN: usize = 65;

    pub fn to_bytes(&self) -> [u8; 65] {
        let mut out = [0u8; 65];
        out[..32].copy_from_slice(&self.r);
        out[32..64].copy_from_slice(&self.s);
        out[64] = self.recovery_id;
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != Self::LEN || bytes[64] > 1 {
            return Err(CryptoError::InvalidSignature);
        }
        let mut r = [0u8; 32];
        let mut s = [0u8; 32];
        r.copy_from_slice(&bytes[..32]);
        s.copy_from_slice(&bytes[32..64]);
        Ok(Signature {
            r,
            s,
            recovery_id: bytes[64],
        })
    }

    /// Recovers the signer's address. High-`s` signatures are refused.
    pub fn recover(&self, digest: &[u8; 32]) -> Result<Address, CryptoError> {
        let sig = EcdsaSignature::from_scalars(self.r, self.s)
            .map_err(|_| CryptoError::InvalidSignature)?;
        if sig.normalize_s().is_some() {
            return Err(CryptoError::InvalidSignature);
        }
        let recid = RecoveryId::from_byte(self.recovery_id).ok_or(CryptoError::InvalidSignature)?;
        let key = VerifyingKey::recover_from_prehash(digest, &sig, recid)
            .map_err(|_| CryptoError::RecoveryFailed)?;
        Ok(Address::from_verifying_key(&key))
    }

    pub fn is_low_s(&self) -> bool {
        EcdsaSignature::from_scalars(self.r, self.s)
            .map(|sig| sig.normalize_s().is_none())
            .unwrap_or(false)
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", hex::encode(self.to_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn keccak_of_empty_input() {
        assert_eq!(
            hex::encode(keccak256(b"")),
            "c5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470"
        );
    }

    #[test]
    fn known_key_address() {
        // Well-known vector: secret 0x...01 controls this address.
        let mut raw = [0u8; 32];
        raw[31] = 1;
        let key = SecretKey::from_bytes(&raw).unwrap();
        assert_eq!(
            key.address().to_string(),
            "0x7e5f4552091a69125d5dfcb7b8c2659029395bdf"
        );
    }

    #[test]
    fn zero_scalar_is_rejected() {
        assert_eq!(
            SecretKey::from_bytes(&[0u8; 32]).unwrap_err(),
            CryptoError::InvalidKey
        );
    }

    #[test]
    fn sign_recover_round_trip() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(9);
        for _ in 0..20 {
            let key = SecretKey::random(&mut rng);
            let mut digest = [0u8; 32];
            rng.fill_bytes(&mut digest);
            let sig = key.sign_prehash(&digest);
            assert!(sig.is_low_s());
            assert_eq!(sig.recover(&digest).unwrap(), key.address());
            let decoded = Signature::from_bytes(&sig.to_bytes()).unwrap();
            assert_eq!(decoded, sig);
        }
    }

    #[test]
    fn debug_redacts_secret() {
        let key = SecretKey::from_hex(&format!("{:064x}", 5)).unwrap();
        let dbg = format!("{key:?}");
        assert!(dbg.contains("redacted"));
        assert!(!dbg.contains(&hex::encode(key.to_bytes())));
    }
}
