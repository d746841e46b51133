use std::collections::HashMap;
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::crypto::{Address, CryptoError, SecretKey};
use crate::hash::{BlockHash, Hash32};
use crate::ledger::{ChainState, LedgerError, DEFAULT_CONFIRM_DEPTH};

use super::backend::{BackendError, PublicChainBackend, SharedBackend};
use super::eth::{anchor_payload, intrinsic_gas, SignedTransaction, UnsignedTransaction};
use super::log::{prefixed_hash, AnchorLog, AnchorRecord, AnchorStatus, FailedAttempt};

pub const DEFAULT_GAS_PRICE_WEI: u64 = 4_000_000_000;
pub const DEFAULT_EXPLORER_TX_URL: &str = "https://etherscan.io/tx/{tx}";
pub const WEI_PER_ETH: u128 = 1_000_000_000_000_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnchorConfig {
    /// Fixed gas price; `None` asks the backend.
    pub gas_price_wei: Option<u64>,
    pub gas_margin_percent: u64,
    pub confirm_depth: u64,
    /// Take the backend's gas estimate instead of the intrinsic-gas rule.
    pub use_backend_estimate: bool,
    /// Sign with EIP-155 replay protection for this chain id.
    pub chain_id: Option<u64>,
    /// `{tx}` is replaced with the 0x-prefixed transaction hash.
    pub explorer_tx_url: String,
    pub usd_per_eth: f64,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        AnchorConfig {
            gas_price_wei: Some(DEFAULT_GAS_PRICE_WEI),
            gas_margin_percent: 20,
            confirm_depth: DEFAULT_CONFIRM_DEPTH,
            use_backend_estimate: false,
            chain_id: None,
            explorer_tx_url: DEFAULT_EXPLORER_TX_URL.into(),
            usd_per_eth: 400.0,
        }
    }
}

impl AnchorConfig {
    pub fn explorer_link(&self, tx: &Hash32) -> String {
        self.explorer_tx_url.replace("{tx}", &format!("0x{}", tx.to_hex()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AnchorError {
    #[error("invalid blockhash {0:?}: expected 64 lowercase hex characters")]
    InvalidBlockhash(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("backend {backend}: {error}")]
    Backend { backend: String, error: BackendError },
    #[error("balance {balance} wei is below the estimated cost {cost} wei")]
    InsufficientFunds { balance: u128, cost: u128 },
    #[error("unknown backend {0:?}")]
    UnknownBackend(String),
    #[error("no backend configured")]
    NoBackend,
    #[error("anchor log: {0}")]
    Log(#[from] std::io::Error),
}

impl AnchorError {
    fn backend(backend: &dyn PublicChainBackend, error: BackendError) -> Self {
        AnchorError::Backend {
            backend: backend.id().to_string(),
            error,
        }
    }

    fn is_connection(&self) -> bool {
        matches!(
            self,
            AnchorError::Backend {
                error: BackendError::Connection(_),
                ..
            }
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WalletError {
    #[error("environment variable {0} is not set")]
    Missing(String),
    #[error("environment variable {0} does not hold a valid key: {1}")]
    Invalid(String, CryptoError),
}

/// The anchoring account. The key never appears in `Debug` output.
pub struct Wallet {
    key: SecretKey,
    address: Address,
}

impl Wallet {
    pub fn new(key: SecretKey) -> Self {
        let address = key.address();
        Wallet { key, address }
    }

    /// Reads a hex-encoded key (with or without `0x`) from `var`.
    pub fn from_env(var: &str) -> Result<Self, WalletError> {
        let value = std::env::var(var).map_err(|_| WalletError::Missing(var.into()))?;
        let key = SecretKey::from_hex(value.trim())
            .map_err(|e| WalletError::Invalid(var.into(), e))?;
        Ok(Wallet::new(key))
    }

    pub fn address(&self) -> Address {
        self.address
    }

    pub fn key(&self) -> &SecretKey {
        &self.key
    }
}

impl std::fmt::Debug for Wallet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Wallet")
            .field("address", &self.address)
            .field("key", &"<redacted>")
            .finish()
    }
}

/// Gas limit for `base` gas plus a percentage margin, rounded down.
pub fn with_margin(base: u64, margin_percent: u64) -> u64 {
    base + base * margin_percent / 100
}

pub fn build_anchor_transaction(
    blockhash: &str,
    backend: &dyn PublicChainBackend,
    wallet: &Address,
    config: &AnchorConfig,
) -> Result<UnsignedTransaction, AnchorError> {
    let hash = Hash32::from_hex(blockhash)
        .map_err(|_| AnchorError::InvalidBlockhash(blockhash.to_string()))?;
    let nonce = backend
        .get_nonce(wallet)
        .map_err(|e| AnchorError::backend(backend, e))?;
    let gas_price = match config.gas_price_wei {
        Some(p) => p as u128,
        None => backend
            .gas_price()
            .map_err(|e| AnchorError::backend(backend, e))?,
    };
    let mut tx = UnsignedTransaction {
        nonce,
        gas_price,
        gas_limit: 0,
        to: *wallet,
        value: 0,
        data: anchor_payload(&hash),
    };
    let base = if config.use_backend_estimate {
        backend
            .estimate_gas(wallet, &tx)
            .map_err(|e| AnchorError::backend(backend, e))?
    } else {
        intrinsic_gas(&tx.data)
    };
    tx.gas_limit = with_margin(base, config.gas_margin_percent);
    Ok(tx)
}

/// Up-front cost of `tx`; refuses when the wallet cannot cover it.
pub fn estimate_cost_and_check(
    tx: &UnsignedTransaction,
    backend: &dyn PublicChainBackend,
    wallet: &Address,
) -> Result<u128, AnchorError> {
    let cost = tx.max_cost();
    let balance = backend
        .get_balance(wallet)
        .map_err(|e| AnchorError::backend(backend, e))?;
    if balance < cost {
        return Err(AnchorError::InsufficientFunds { balance, cost });
    }
    Ok(cost)
}

pub fn sign_and_encode(
    tx: &UnsignedTransaction,
    key: &SecretKey,
    chain_id: Option<u64>,
) -> (Vec<u8>, Hash32) {
    let signed: SignedTransaction = tx.sign(key, chain_id);
    let raw = signed.raw();
    let hash = Hash32(crate::crypto::keccak256(&raw));
    (raw, hash)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorStatusReport {
    pub record_id: u64,
    pub status: AnchorStatus,
    pub confirmations: u64,
    pub inclusion_height: Option<u64>,
    #[serde(with = "prefixed_hash")]
    pub eth_tx_hash: Hash32,
    pub explorer_url: String,
    /// Set when the backend could not be reached and the values are the
    /// last ones seen.
    pub stale: bool,
}

pub fn anchor_status(
    record: &AnchorRecord,
    backend: &dyn PublicChainBackend,
    config: &AnchorConfig,
) -> Result<AnchorStatusReport, BackendError> {
    let mut report = AnchorStatusReport {
        record_id: record.id,
        status: record.status,
        confirmations: 0,
        inclusion_height: None,
        eth_tx_hash: record.eth_tx_hash,
        explorer_url: config.explorer_link(&record.eth_tx_hash),
        stale: false,
    };
    if let Some(receipt) = backend.get_receipt(&record.eth_tx_hash)? {
        report.inclusion_height = Some(receipt.block_height);
        if receipt.success {
            let head = backend.head_height()?;
            report.status = AnchorStatus::Confirmed;
            report.confirmations = (head + 1).saturating_sub(receipt.block_height);
        } else {
            report.status = AnchorStatus::Failed;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostPreview {
    pub private_height: u64,
    pub private_blockhash: BlockHash,
    pub gas_limit: u64,
    pub gas_price_wei: u128,
    pub cost_wei: u128,
    pub cost_usd: f64,
    pub balance_wei: u128,
    pub sufficient: bool,
}

pub fn wei_to_usd(wei: u128, usd_per_eth: f64) -> f64 {
    wei as f64 / WEI_PER_ETH as f64 * usd_per_eth
}

/// Runs anchor submissions one at a time against an ordered list of
/// backends and keeps the anchor log.
#[derive(Debug)]
pub struct Anchorer {
    wallet: Wallet,
    backends: Vec<SharedBackend>,
    config: AnchorConfig,
    log: RwLock<AnchorLog>,
    submit: Mutex<()>,
    last_seen: Mutex<HashMap<u64, AnchorStatusReport>>,
}

impl Anchorer {
    pub fn new(wallet: Wallet, backends: Vec<SharedBackend>, config: AnchorConfig, log: AnchorLog) -> Self {
        Anchorer {
            wallet,
            backends,
            config,
            log: RwLock::new(log),
            submit: Mutex::new(()),
            last_seen: Mutex::new(HashMap::new()),
        }
    }

    pub fn wallet_address(&self) -> Address {
        self.wallet.address()
    }

    pub fn config(&self) -> &AnchorConfig {
        &self.config
    }

    pub fn backend_ids(&self) -> Vec<String> {
        self.backends.iter().map(|b| b.id().to_string()).collect()
    }

    pub fn backend(&self, id: &str) -> Option<&SharedBackend> {
        self.backends.iter().find(|b| b.id() == id)
    }

    /// Backends to try, in order: just the selected one, or all of them.
    fn candidates(&self, selection: Option<&str>) -> Result<Vec<&SharedBackend>, AnchorError> {
        match selection {
            Some(id) => self
                .backend(id)
                .map(|b| vec![b])
                .ok_or_else(|| AnchorError::UnknownBackend(id.to_string())),
            None if self.backends.is_empty() => Err(AnchorError::NoBackend),
            None => Ok(self.backends.iter().collect()),
        }
    }

    fn attempt(&self, backend: &dyn PublicChainBackend, blockhash: &BlockHash) -> Result<Hash32, AnchorError> {
        let address = self.wallet.address();
        let tx = build_anchor_transaction(&blockhash.to_hex(), backend, &address, &self.config)?;
        estimate_cost_and_check(&tx, backend, &address)?;
        let (raw, local_hash) = sign_and_encode(&tx, self.wallet.key(), self.config.chain_id);
        let remote_hash = backend
            .send_raw_transaction(&raw)
            .map_err(|e| AnchorError::backend(backend, e))?;
        if remote_hash != local_hash {
            tracing::warn!(%local_hash, %remote_hash, "backend reported a different tx hash");
        }
        Ok(remote_hash)
    }

    fn fail(
        &self,
        now: DateTime<Utc>,
        backend: Option<&str>,
        target: Option<(BlockHash, u64)>,
        err: &AnchorError,
    ) -> Result<(), AnchorError> {
        tracing::warn!(backend, error = %err, "anchor attempt failed");
        self.log.write().unwrap().record_failure(FailedAttempt {
            at: now,
            backend: backend.map(str::to_string),
            private_height: target.map(|t| t.1),
            private_blockhash: target.map(|t| t.0),
            reason: err.to_string(),
        })?;
        Ok(())
    }

    /// Anchors the chain's latest confirmed block. `selection` restricts the
    /// attempt to one backend; otherwise backends are tried in order and the
    /// next is used only after a connection error.
    pub fn submit_anchor(
        &self,
        chain: &ChainState,
        selection: Option<&str>,
        now: DateTime<Utc>,
    ) -> Result<AnchorRecord, AnchorError> {
        let _guard = self.submit.lock().unwrap();
        let (blockhash, height) = match chain.latest_confirmed_blockhash(self.config.confirm_depth) {
            Ok(t) => t,
            Err(e) => {
                let err = AnchorError::Ledger(e);
                self.fail(now, selection, None, &err)?;
                return Err(err);
            }
        };
        let candidates = match self.candidates(selection) {
            Ok(c) => c,
            Err(err) => {
                self.fail(now, selection, Some((blockhash, height)), &err)?;
                return Err(err);
            }
        };
        let mut last_err = AnchorError::NoBackend;
        for backend in candidates {
            match self.attempt(backend.as_ref(), &blockhash) {
                Ok(tx_hash) => {
                    let record = AnchorRecord {
                        id: 0,
                        anchored_at: now,
                        private_blockhash: blockhash,
                        private_height: height,
                        eth_tx_hash: tx_hash,
                        wallet_address: self.wallet.address(),
                        backend: backend.id().to_string(),
                        status: AnchorStatus::Submitted,
                    };
                    let record = self.log.write().unwrap().append(record)?;
                    tracing::info!(id = record.id, height, %tx_hash, backend = backend.id(), "anchor submitted");
                    return Ok(record);
                }
                Err(err) => {
                    self.fail(now, Some(backend.id()), Some((blockhash, height)), &err)?;
                    let failover = err.is_connection();
                    last_err = err;
                    if !failover {
                        break;
                    }
                }
            }
        }
        Err(last_err)
    }

    /// Current status of record `id`, refreshed from its backend. A status
    /// change is persisted. On a connection failure the last known report is
    /// returned with `stale` set.
    pub fn status(&self, id: u64) -> Option<AnchorStatusReport> {
        let record = self.log.read().unwrap().get(id)?.clone();
        let backend = self
            .backend(&record.backend)
            .or_else(|| self.backends.first());
        let fresh = match backend {
            Some(b) => anchor_status(&record, b.as_ref(), &self.config).ok(),
            None => None,
        };
        match fresh {
            Some(report) => {
                if report.status != record.status {
                    if let Err(e) = self.log.write().unwrap().set_status(id, report.status, Utc::now()) {
                        tracing::error!(error = %e, "could not persist anchor status");
                    }
                }
                self.last_seen.lock().unwrap().insert(id, report.clone());
                Some(report)
            }
            None => {
                let cached = self.last_seen.lock().unwrap().get(&id).cloned();
                Some(AnchorStatusReport {
                    stale: true,
                    ..cached.unwrap_or(AnchorStatusReport {
                        record_id: id,
                        status: record.status,
                        confirmations: 0,
                        inclusion_height: None,
                        eth_tx_hash: record.eth_tx_hash,
                        explorer_url: self.config.explorer_link(&record.eth_tx_hash),
                        stale: true,
                    })
                })
            }
        }
    }

    /// Earliest anchor covering a block at `height`.
    pub fn covering(&self, height: u64) -> Option<AnchorRecord> {
        self.log.read().unwrap().covering(height).cloned()
    }

    pub fn records(&self) -> Vec<AnchorRecord> {
        self.log.read().unwrap().records().to_vec()
    }

    pub fn failures(&self) -> Vec<FailedAttempt> {
        self.log.read().unwrap().failures().to_vec()
    }

    pub fn last_anchor(&self) -> Option<AnchorRecord> {
        self.log.read().unwrap().last().cloned()
    }

    pub fn page(&self, page: usize, per_page: usize) -> (Vec<AnchorRecord>, usize) {
        let log = self.log.read().unwrap();
        (log.page(page, per_page), log.records().len())
    }

    /// What the next anchor would cost, without submitting anything.
    pub fn preview(&self, chain: &ChainState, selection: Option<&str>) -> Result<CostPreview, AnchorError> {
        let (blockhash, height) = chain.latest_confirmed_blockhash(self.config.confirm_depth)?;
        let mut last_err = AnchorError::NoBackend;
        for backend in self.candidates(selection)? {
            let address = self.wallet.address();
            let result = build_anchor_transaction(&blockhash.to_hex(), backend.as_ref(), &address, &self.config)
                .and_then(|tx| {
                    let balance = backend
                        .get_balance(&address)
                        .map_err(|e| AnchorError::backend(backend.as_ref(), e))?;
                    Ok((tx, balance))
                });
            match result {
                Ok((tx, balance)) => {
                    let cost = tx.max_cost();
                    return Ok(CostPreview {
                        private_height: height,
                        private_blockhash: blockhash,
                        gas_limit: tx.gas_limit,
                        gas_price_wei: tx.gas_price,
                        cost_wei: cost,
                        cost_usd: wei_to_usd(cost, self.config.usd_per_eth),
                        balance_wei: balance,
                        sufficient: balance >= cost,
                    });
                }
                Err(e) if e.is_connection() => last_err = e,
                Err(e) => return Err(e),
            }
        }
        Err(last_err)
    }
}
