//! Permissioned data-integrity ledger with public-chain anchoring.
//!
//! * [`ledger`]: the private chain (blocks, signed transactions, asset index,
//!   permissions, validation, block log).
//! * [`network`]: node-to-node handshake, propagation, sync and fork choice.
//! * [`anchor`]: Ethereum-format raw transactions that commit the private
//!   chain's confirmed block hash to a public chain, plus the anchor log and
//!   the cross-check that detects rewritten history.
//! * [`hashing`]: streaming md5 + SHA-256 file digests.
//!
//! The guide under `book/` walks through each of these with runnable
//! examples.

pub mod anchor;
pub mod codec;
pub mod crypto;
pub mod hash;
pub mod hashing;
pub mod ledger;
pub mod network;
pub mod testkit;

pub use crypto::{Address, NodeId, SecretKey, Signature};
pub use hash::{BlockHash, Hash32, TxId};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/ledger.md")]
    mod ledger {}
    #[doc = include_str!("../../../book/src/anchoring.md")]
    mod anchoring {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
