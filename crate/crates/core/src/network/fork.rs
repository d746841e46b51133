use std::collections::HashSet;

use crate::ledger::{Block, BlockError, ChainState, LedgerTransaction};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ForkError {
    #[error("chains start from different genesis blocks")]
    IncompatibleNetwork,
    #[error("remote chain is invalid at height {height}: {error}")]
    InvalidRemote { height: u64, error: BlockError },
}

#[derive(Debug, Clone)]
pub enum ForkChoice {
    KeepLocal,
    AdoptRemote {
        state: ChainState,
        /// First height at which the chains differ.
        fork_height: u64,
        /// Asset transactions only the abandoned branch contained.
        orphaned: Vec<LedgerTransaction>,
    },
}

/// Longest valid chain wins; on equal length the local chain stays.
pub fn resolve_fork(local: &ChainState, remote: &[Block]) -> Result<ForkChoice, ForkError> {
    let Some(first) = remote.first() else {
        return Err(ForkError::InvalidRemote {
            height: 0,
            error: BlockError::InvalidGenesis("empty chain"),
        });
    };
    if first.hash() != local.genesis_hash() {
        return Err(ForkError::IncompatibleNetwork);
    }
    if remote.len() as u64 <= local.len() {
        return Ok(ForkChoice::KeepLocal);
    }
    let state = ChainState::replay(remote, local.difficulty())
        .map_err(|(height, error)| ForkError::InvalidRemote { height, error })?;
    let fork_height = (0..local.len())
        .find(|h| local.block_hash(*h) != state.block_hash(*h))
        .unwrap_or(local.len());
    let kept: HashSet<_> = state
        .blocks()
        .skip(fork_height as usize)
        .flat_map(|b| b.transactions.iter().map(LedgerTransaction::tx_id))
        .collect();
    let orphaned = local
        .blocks()
        .skip(fork_height as usize)
        .flat_map(|b| b.transactions.iter())
        .filter(|tx| tx.asset().is_some() && !kept.contains(&tx.tx_id()))
        .cloned()
        .collect();
    Ok(ForkChoice::AdoptRemote {
        state,
        fork_height,
        orphaned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::Difficulty;
    use crate::testkit::{asset, ChainBuilder};

    fn base(len: u64) -> ChainBuilder {
        let mut b = ChainBuilder::new(Difficulty(1));
        let mut seed = 0;
        b.extend_with_assets(len, 1, &mut seed);
        b
    }

    #[test]
    fn longer_remote_is_adopted_and_orphans_returned() {
        let common = base(5);
        let mut local = common.clone();
        let master = local.master.clone();
        let tx = local.asset_tx(&master, asset(900));
        local.mine(vec![tx.clone()]);

        let mut remote = common.clone();
        remote.clock += 7;
        remote.mine(vec![]);
        remote.mine(vec![]);

        match resolve_fork(&local.state, &remote.state.to_blocks()).unwrap() {
            ForkChoice::AdoptRemote {
                state,
                fork_height,
                orphaned,
            } => {
                assert_eq!(state.tip_hash(), remote.state.tip_hash());
                assert_eq!(fork_height, 5);
                assert_eq!(orphaned, vec![tx]);
            }
            ForkChoice::KeepLocal => panic!("remote is longer"),
        }
    }

    #[test]
    fn equal_length_keeps_local() {
        let common = base(5);
        let mut local = common.clone();
        local.mine(vec![]);
        let mut remote = common;
        remote.clock += 3;
        remote.mine(vec![]);
        assert_ne!(local.state.tip_hash(), remote.state.tip_hash());
        assert!(matches!(
            resolve_fork(&local.state, &remote.state.to_blocks()).unwrap(),
            ForkChoice::KeepLocal
        ));
    }

    #[test]
    fn different_genesis_is_incompatible() {
        let local = base(3);
        let other_genesis = crate::ledger::create_genesis(&crate::testkit::key(2), 1, Difficulty(1));
        assert_eq!(
            resolve_fork(&local.state, &[other_genesis]).unwrap_err(),
            ForkError::IncompatibleNetwork
        );
    }

    #[test]
    fn invalid_longer_remote_is_refused() {
        let local = base(3);
        let mut remote = base(6).state.to_blocks();
        remote[4].header.nonce ^= 1;
        assert!(matches!(
            resolve_fork(&local.state, &remote),
            Err(ForkError::InvalidRemote { height: 4, .. }) | Err(ForkError::InvalidRemote { height: 5, .. })
        ));
    }
}
