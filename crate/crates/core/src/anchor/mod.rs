//! Commits the private chain's confirmed block hash to a public
//! Ethereum-format chain.
//!
//! [`Anchorer::submit_anchor`] picks the block `confirm_depth` behind the
//! tip, builds a zero-value self-send whose data is that hash in ASCII hex,
//! checks the wallet can pay for it, signs it and hands the raw bytes to a
//! [`PublicChainBackend`]. Successful submissions go to the [`AnchorLog`];
//! refusals are logged as failed attempts. [`check_anchors`] later compares
//! a chain against the log.

mod audit;
mod backend;
pub mod eth;
mod log;
mod mock;
mod schedule;
mod service;

pub use audit::{
    check_anchors, check_anchors_encoded, verify_anchor_on_chain, AnchorMismatch, MismatchKind,
    OnChainCheck,
};
pub use backend::{BackendError, PublicChainBackend, Receipt, SharedBackend};
pub use eth::{SignedTransaction, UnsignedTransaction};
pub use log::{AnchorLog, AnchorRecord, AnchorStatus, FailedAttempt};
pub use mock::MockChain;
pub use schedule::{last_fire_at_or_before, run_schedule_tick, ScheduleAction, ScheduleConfig, SkipReason};
pub use service::{
    anchor_status, build_anchor_transaction, estimate_cost_and_check, sign_and_encode, wei_to_usd,
    with_margin, AnchorConfig, AnchorError, AnchorStatusReport, Anchorer, CostPreview, Wallet,
    WalletError, DEFAULT_EXPLORER_TX_URL, DEFAULT_GAS_PRICE_WEI,
};
