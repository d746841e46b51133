//! In-process stand-in for a public Ethereum-format chain.
//!
//! Enforces the same admission rules a real node applies to legacy
//! transactions (well-formed RLP, valid low-s signature, nonce not reused,
//! intrinsic gas covered, balance covers `gas_limit * gas_price + value`)
//! and mines every includable pending transaction on [`MockChain::step`].

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use crate::crypto::Address;
use crate::hash::Hash32;

use super::backend::{BackendError, PublicChainBackend, Receipt};
use super::eth::{intrinsic_gas, SignedTransaction, UnsignedTransaction};

#[derive(Debug, Default, Clone, Copy)]
struct Account {
    balance: u128,
    nonce: u64,
}

#[derive(Debug, Clone)]
struct PendingTx {
    hash: Hash32,
    sender: Address,
    tx: SignedTransaction,
}

#[derive(Debug, Default)]
struct MockState {
    accounts: HashMap<Address, Account>,
    pending: Vec<PendingTx>,
    head: u64,
    receipts: HashMap<Hash32, Receipt>,
    raw: HashMap<Hash32, Vec<u8>>,
}

#[derive(Debug)]
pub struct MockChain {
    id: String,
    chain_id: Option<u64>,
    gas_price: u128,
    reachable: AtomicBool,
    state: Mutex<MockState>,
}

impl MockChain {
    pub fn new(id: impl Into<String>) -> Self {
        MockChain {
            id: id.into(),
            chain_id: None,
            gas_price: 4_000_000_000,
            reachable: AtomicBool::new(true),
            state: Mutex::new(MockState::default()),
        }
    }

    /// Also accept EIP-155 transactions for this chain id.
    pub fn with_chain_id(mut self, chain_id: u64) -> Self {
        self.chain_id = Some(chain_id);
        self
    }

    pub fn fund(&self, address: Address, wei: u128) {
        self.state
            .lock()
            .unwrap()
            .accounts
            .entry(address)
            .or_default()
            .balance += wei;
    }

    pub fn set_balance(&self, address: Address, wei: u128) {
        self.state
            .lock()
            .unwrap()
            .accounts
            .entry(address)
            .or_default()
            .balance = wei;
    }

    /// Balance regardless of reachability (for test assertions).
    pub fn balance_of(&self, address: &Address) -> u128 {
        self.state
            .lock()
            .unwrap()
            .accounts
            .get(address)
            .map_or(0, |a| a.balance)
    }

    pub fn set_reachable(&self, reachable: bool) {
        self.reachable.store(reachable, Ordering::SeqCst);
    }

    pub fn pending_count(&self) -> usize {
        self.state.lock().unwrap().pending.len()
    }

    /// Decoded transaction by hash, regardless of reachability.
    pub fn transaction(&self, hash: &Hash32) -> Option<SignedTransaction> {
        let st = self.state.lock().unwrap();
        st.raw.get(hash).and_then(|r| SignedTransaction::decode(r).ok())
    }

    /// Mines one block containing every includable pending transaction.
    /// Returns the new head height.
    pub fn step(&self) -> u64 {
        let mut st = self.state.lock().unwrap();
        st.head += 1;
        let height = st.head;
        let mut pending = std::mem::take(&mut st.pending);
        pending.sort_by_key(|p| (p.sender, p.tx.tx.nonce));
        let mut keep = Vec::new();
        for p in pending {
            let acct = st.accounts.get(&p.sender).copied().unwrap_or_default();
            if p.tx.tx.nonce < acct.nonce {
                // superseded by an earlier inclusion with the same nonce
                continue;
            }
            if p.tx.tx.nonce > acct.nonce {
                keep.push(p);
                continue;
            }
            let tx = &p.tx.tx;
            if acct.balance < tx.max_cost() {
                st.receipts.insert(
                    p.hash,
                    Receipt {
                        block_height: height,
                        success: false,
                        gas_used: 0,
                    },
                );
                continue;
            }
            let gas_used = intrinsic_gas(&tx.data);
            let fee = gas_used as u128 * tx.gas_price;
            {
                let a = st.accounts.entry(p.sender).or_default();
                a.balance -= fee + tx.value;
                a.nonce += 1;
            }
            st.accounts.entry(tx.to).or_default().balance += tx.value;
            st.receipts.insert(
                p.hash,
                Receipt {
                    block_height: height,
                    success: true,
                    gas_used,
                },
            );
        }
        st.pending = keep;
        height
    }

    /// Mines `n` blocks.
    pub fn advance(&self, n: u64) -> u64 {
        let mut h = 0;
        for _ in 0..n {
            h = self.step();
        }
        h
    }

    fn ensure_reachable(&self) -> Result<(), BackendError> {
        if self.reachable.load(Ordering::SeqCst) {
            Ok(())
        } else {
            Err(BackendError::Connection(format!("{} is unreachable", self.id)))
        }
    }
}

impl PublicChainBackend for MockChain {
    fn id(&self) -> &str {
        &self.id
    }

    fn get_nonce(&self, address: &Address) -> Result<u64, BackendError> {
        self.ensure_reachable()?;
        let st = self.state.lock().unwrap();
        let mut nonce = st.accounts.get(address).map_or(0, |a| a.nonce);
        while st
            .pending
            .iter()
            .any(|p| p.sender == *address && p.tx.tx.nonce == nonce)
        {
            nonce += 1;
        }
        Ok(nonce)
    }

    fn get_balance(&self, address: &Address) -> Result<u128, BackendError> {
        self.ensure_reachable()?;
        Ok(self.balance_of(address))
    }

    fn estimate_gas(&self, _from: &Address, tx: &UnsignedTransaction) -> Result<u64, BackendError> {
        self.ensure_reachable()?;
        Ok(intrinsic_gas(&tx.data))
    }

    fn gas_price(&self) -> Result<u128, BackendError> {
        self.ensure_reachable()?;
        Ok(self.gas_price)
    }

    fn send_raw_transaction(&self, raw: &[u8]) -> Result<Hash32, BackendError> {
        self.ensure_reachable()?;
        let reject = |m: String| BackendError::Rejected(m);
        let tx = SignedTransaction::decode(raw).map_err(|e| reject(format!("invalid transaction: {e}")))?;
        let chain_id = tx.chain_id().map_err(|e| reject(e.to_string()))?;
        if chain_id.is_some() && chain_id != self.chain_id {
            return Err(reject("invalid chain id".into()));
        }
        let sender = tx
            .recover_sender()
            .map_err(|e| reject(format!("invalid sender: {e}")))?;
        let hash = Hash32(crate::crypto::keccak256(raw));
        let mut st = self.state.lock().unwrap();
        if st.raw.contains_key(&hash) {
            return Err(reject("already known".into()));
        }
        let acct = st.accounts.get(&sender).copied().unwrap_or_default();
        if tx.tx.nonce < acct.nonce {
            return Err(reject("nonce too low".into()));
        }
        if tx.tx.gas_limit < intrinsic_gas(&tx.tx.data) {
            return Err(reject("intrinsic gas too low".into()));
        }
        if acct.balance < tx.tx.max_cost() {
            return Err(reject("insufficient funds for gas * price + value".into()));
        }
        st.raw.insert(hash, raw.to_vec());
        st.pending.push(PendingTx { hash, sender, tx });
        Ok(hash)
    }

    fn get_receipt(&self, tx_hash: &Hash32) -> Result<Option<Receipt>, BackendError> {
        self.ensure_reachable()?;
        Ok(self.state.lock().unwrap().receipts.get(tx_hash).copied())
    }

    fn get_raw_transaction(&self, tx_hash: &Hash32) -> Result<Option<Vec<u8>>, BackendError> {
        self.ensure_reachable()?;
        Ok(self.state.lock().unwrap().raw.get(tx_hash).cloned())
    }

    fn head_height(&self) -> Result<u64, BackendError> {
        self.ensure_reachable()?;
        Ok(self.state.lock().unwrap().head)
    }
}
