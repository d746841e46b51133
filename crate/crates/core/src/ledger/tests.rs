use proptest::prelude::*;
use rand::{Rng, SeedableRng};

use super::*;
use crate::hash::Hash32;
use crate::testkit::{asset, client_permissions, key, ChainBuilder};

#[test]
fn genesis_grants_everything_to_master() {
    let b = ChainBuilder::new(Difficulty(2));
    let genesis = b.genesis();
    assert_eq!(genesis.header.height, 0);
    assert_eq!(genesis.header.prev_hash, Hash32::ZERO);
    assert!(genesis.hash().to_hex().starts_with("00"));
    assert_eq!(b.state.permissions_of(&b.master.address()), Permissions::all());
}

#[test]
fn genesis_with_foreign_grant_is_rejected() {
    let master = key(1);
    let mut genesis = create_genesis(&master, 10, Difficulty(0));
    let forged = LedgerTransaction::sign(
        &master,
        1,
        TxPayload::PermissionSet(PermissionGrant {
            subject: key(2).address(),
            permissions: Permissions::all(),
            granted: true,
            issuer: master.address(),
        }),
    );
    genesis.transactions = vec![forged];
    genesis.header.tx_root = merkle_root(&genesis.transactions);
    assert!(matches!(
        ChainState::from_genesis(genesis, Difficulty(0)),
        Err(BlockError::InvalidGenesis(_))
    ));
}

#[test]
fn valid_block_increments_tip() {
    let mut b = ChainBuilder::new(Difficulty(2));
    let master = b.master.clone();
    let tx = b.asset_tx(&master, asset(1));
    let before = b.state.tip_height();
    let block = b.mine(vec![tx]);
    assert_eq!(b.state.tip_height(), before + 1);
    assert!(block.hash().to_hex().starts_with("00"));
    assert_eq!(block.header.prev_hash, b.state.block_hash(before).unwrap());
}

#[test]
fn grandparent_reference_is_stale() {
    let mut b = ChainBuilder::new(Difficulty(1));
    b.mine(vec![]);
    let fork_base = b.state.clone();
    b.mine(vec![]);
    // block mined on the grandparent of the current tip
    let mut sibling_state = fork_base.clone();
    let stale = sibling_state
        .mine_block(vec![], b.master.address(), b.clock + 1)
        .unwrap();
    sibling_state.append_block(stale.clone()).unwrap();
    let err = b.state.append_block(stale).unwrap_err();
    assert!(matches!(err, BlockError::StaleParent { .. }));
}

#[test]
fn proof_below_target_is_rejected() {
    let mut b = ChainBuilder::new(Difficulty(2));
    let mut block = b.state.mine_block(vec![], b.master.address(), b.clock).unwrap();
    // walk the nonce until the hash no longer meets the target
    while Difficulty(2).is_met_by(&block.hash()) {
        block.header.nonce += 1;
    }
    assert!(matches!(
        b.state.append_block(block),
        Err(BlockError::InvalidProof(_))
    ));
}

#[test]
fn non_admin_permission_tx_rejects_whole_block() {
    let mut b = ChainBuilder::new(Difficulty(1));
    let client = key(2);
    b.grant(&client, client_permissions());
    let self_grant = LedgerTransaction::sign(
        &client,
        5,
        TxPayload::PermissionSet(PermissionGrant {
            subject: client.address(),
            permissions: Permissions::of(&[Permission::Admin]),
            granted: true,
            issuer: client.address(),
        }),
    );
    let good = b.asset_tx(&client, asset(7));
    let txs = vec![good, self_grant];
    let header = BlockHeader {
        height: b.state.tip_height() + 1,
        prev_hash: b.state.tip_hash(),
        tx_root: merkle_root(&txs),
        timestamp: b.clock + 1,
        nonce: 0,
        miner: b.master.address(),
    };
    let block = Block {
        header: solve_proof_of_work(header, Difficulty(1)),
        transactions: txs,
    };
    let before = b.state.clone();
    let err = b.state.append_block(block).unwrap_err();
    assert!(matches!(
        err,
        BlockError::InvalidTransaction {
            index: 1,
            reason: TxError::PermissionDenied {
                required: Permission::Admin,
                ..
            },
            ..
        }
    ));
    // all-or-nothing: the valid asset in the same block was not applied
    assert_eq!(b.state, before);
}

#[test]
fn set_permission_requires_admin() {
    let b = ChainBuilder::new(Difficulty(0));
    let client = key(2);
    let err = b
        .state
        .set_permission_tx(client.address(), Permissions::all(), true, &client, 1)
        .unwrap_err();
    assert!(matches!(
        err,
        LedgerError::Tx(TxError::PermissionDenied {
            required: Permission::Admin,
            ..
        })
    ));
}

#[test]
fn granted_client_may_issue_assets() {
    let mut b = ChainBuilder::new(Difficulty(1));
    let client = key(2);
    assert!(b
        .state
        .issue_asset_tx(asset(1), &client, 1, std::iter::empty())
        .is_err());
    b.grant(&client, client_permissions());
    let tx = b.asset_tx(&client, asset(1));
    b.mine(vec![tx]);
    assert!(b.state.query_asset(&asset(1).md5_index).is_some());
}

#[test]
fn revoked_send_rejected_in_next_block() {
    let mut b = ChainBuilder::new(Difficulty(1));
    let client = key(2);
    b.grant(&client, client_permissions());
    let signed_before_revocation = b.asset_tx(&client, asset(1));
    let ms = b.next_ms();
    let revoke = b
        .state
        .set_permission_tx(
            client.address(),
            Permissions::of(&[Permission::Send]),
            false,
            &b.master,
            ms,
        )
        .unwrap();
    b.mine(vec![revoke]);
    assert!(!b.state.has_permission(&client.address(), Permission::Send));
    assert!(b.state.has_permission(&client.address(), Permission::Connect));

    let err = b
        .state
        .mine_block(vec![signed_before_revocation], b.master.address(), b.clock)
        .unwrap_err();
    assert!(matches!(
        err,
        LedgerError::PendingRejected {
            reason: TxError::PermissionDenied { .. },
            ..
        }
    ));
}

#[test]
fn duplicate_md5_in_pending_names_second_tx() {
    let mut b = ChainBuilder::new(Difficulty(0));
    let master = b.master.clone();
    let first = b.asset_tx(&master, asset(1));
    let mut dup = asset(1);
    dup.source_uri = "elsewhere".into();
    let second = LedgerTransaction::sign(&master, 99, TxPayload::AssetIssue(dup));
    let second_id = second.tx_id();
    let err = b
        .state
        .mine_block(vec![first, second], master.address(), 0)
        .unwrap_err();
    match err {
        LedgerError::PendingRejected {
            index,
            tx_id,
            reason: TxError::DuplicateAsset(_),
        } => {
            assert_eq!(index, 1);
            assert_eq!(tx_id, second_id);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn issue_asset_tx_rules() {
    let mut b = ChainBuilder::new(Difficulty(0));
    let master = b.master.clone();
    let fig = AssetRecord {
        md5_index: Md5Index::parse("b5a5dfa95146b28cd79e791fcd4eaace").unwrap(),
        sha256: Sha256Hex::parse(&"0".repeat(64)).unwrap(),
        source_uri: "network.example/ingest/file/mnt/data".into(),
        processed_ts: 1_519_316_242_073,
        metadata: Default::default(),
        parent_md5: None,
    };
    let tx = b
        .state
        .issue_asset_tx(fig.clone(), &master, 1, std::iter::empty())
        .unwrap();
    assert_eq!(tx.kind(), TxKind::AssetIssue);
    assert!(tx.verify_signature());
    assert_eq!(LedgerTransaction::decode(&tx.encode()).unwrap().tx_id(), tx.tx_id());

    // duplicate against the pending pool
    let err = b
        .state
        .issue_asset_tx(fig.clone(), &master, 2, [&tx])
        .unwrap_err();
    assert!(matches!(err, LedgerError::Tx(TxError::DuplicateAsset(_))));

    // duplicate against the confirmed chain
    b.mine(vec![tx]);
    let err = b
        .state
        .issue_asset_tx(fig, &master, 3, std::iter::empty())
        .unwrap_err();
    assert!(matches!(err, LedgerError::Tx(TxError::DuplicateAsset(_))));

    assert!(Md5Index::parse(&"a".repeat(31)).is_err());
}

#[test]
fn unknown_parent_is_rejected() {
    let b = ChainBuilder::new(Difficulty(0));
    let mut child = asset(2);
    child.parent_md5 = Some(asset(1).md5_index);
    let err = b
        .state
        .issue_asset_tx(child, &b.master, 1, std::iter::empty())
        .unwrap_err();
    assert!(matches!(err, LedgerError::Tx(TxError::UnknownParent(_))));
}

#[test]
fn query_asset_reports_block_and_time() {
    let mut b = ChainBuilder::new(Difficulty(1));
    let master = b.master.clone();
    let md5 = "abd992b7a76a6ae845752ac8d1f72812";
    let mut record = asset(1);
    record.md5_index = Md5Index::parse(md5).unwrap();
    let tx = b.asset_tx(&master, record);
    // broadcast but not yet included
    assert!(b.state.query_asset_str(md5).unwrap().is_none());
    let block = b.mine(vec![tx.clone()]);
    let view = b.state.query_asset_str(md5).unwrap().unwrap();
    assert_eq!(view.issue_tx_id, tx.tx_id());
    assert_eq!(view.block_hash, block.hash());
    assert_eq!(view.block_time, block.header.timestamp);
    assert!(b.state.query_asset_str("ffffffffffffffffffffffffffffffff").unwrap().is_none());
    assert!(b.state.query_asset_str("abc").is_err());
}

#[test]
fn latest_confirmed_blockhash_depths() {
    let mut b = ChainBuilder::new(Difficulty(0));
    for _ in 0..9 {
        b.mine(vec![]);
    }
    assert_eq!(b.state.len(), 10);
    assert_eq!(
        b.state.latest_confirmed_blockhash(0).unwrap(),
        (b.state.tip_hash(), 9)
    );
    assert_eq!(
        b.state.latest_confirmed_blockhash(6).unwrap(),
        (b.state.block_hash(3).unwrap(), 3)
    );

    let mut short = ChainBuilder::new(Difficulty(0));
    for _ in 0..3 {
        short.mine(vec![]);
    }
    assert!(matches!(
        short.state.latest_confirmed_blockhash(6),
        Err(LedgerError::InsufficientDepth { len: 4, depth: 6 })
    ));
}

#[test]
fn lineage_walk_terminates_at_root() {
    let mut b = ChainBuilder::new(Difficulty(0));
    let master = b.master.clone();
    let raw = asset(1);
    let mut aligned = asset(2);
    aligned.parent_md5 = Some(raw.md5_index.clone());
    let mut summary = asset(3);
    summary.parent_md5 = Some(aligned.md5_index.clone());
    let t1 = b.asset_tx(&master, raw.clone());
    b.mine(vec![t1]);
    // parent and child may share a block as long as the parent comes first
    let t2 = b.asset_tx(&master, aligned);
    let ms = b.next_ms();
    let t3 = b.state.issue_asset_tx(summary.clone(), &master, ms, [&t2]).unwrap();
    b.mine(vec![t2, t3]);
    let chain: Vec<_> = b
        .state
        .lineage(&summary.md5_index)
        .into_iter()
        .map(|v| v.record.md5_index.clone())
        .collect();
    assert_eq!(chain.len(), 3);
    assert_eq!(chain[2], raw.md5_index);
}

#[test]
fn removing_a_tx_breaks_validation() {
    let mut b = ChainBuilder::new(Difficulty(1));
    let mut seed = 0;
    b.extend_with_assets(6, 3, &mut seed);
    let mut blocks = b.state.to_blocks();
    assert!(validate_chain(&blocks, Difficulty(1)).valid);
    blocks[3].transactions.remove(1);
    let report = validate_chain(&blocks, Difficulty(1));
    assert!(!report.valid);
    assert_eq!(report.failed_at(), Some(3));
    assert_eq!(report.failure.unwrap().error, BlockError::TxRootMismatch);
}

#[test]
fn every_single_byte_flip_is_detected() {
    // exhaustive over a short chain: every byte of every block, one xor mask
    let mut b = ChainBuilder::new(Difficulty(1));
    let mut seed = 0;
    b.extend_with_assets(4, 2, &mut seed);
    let records: Vec<Vec<u8>> = b.state.blocks().map(Block::encode).collect();
    let tip_before = b.state.tip_hash();
    for (bi, rec) in records.iter().enumerate() {
        for off in 0..rec.len() {
            let mut mutated = records.clone();
            mutated[bi][off] ^= 0x01;
            let report = validate_encoded_chain(&mutated, Difficulty(1));
            assert!(!report.valid, "flip at block {bi} byte {off} went undetected");
            let h = report.failed_at().unwrap();
            assert!(h == bi as u64 || h == bi as u64 + 1, "block {bi} byte {off} failed at {h}");
            // the tip a verifier accepts is no longer the original tip
            assert_ne!(report.tip, Some(tip_before));
        }
    }
}

#[test]
fn block_log_round_trip_and_torn_tail() {
    let dir = tempfile::tempdir().unwrap();
    let mut b = ChainBuilder::new(Difficulty(1));
    let genesis = b.genesis();
    let ledger = Ledger::open(dir.path(), genesis.clone(), Difficulty(1)).unwrap();
    let mut seed = 0;
    for _ in 0..3 {
        b.extend_with_assets(b.state.len() + 1, 2, &mut seed);
        ledger.append(b.state.tip().clone()).unwrap();
    }
    drop(ledger);

    let log_path = dir.path().join(store::LOG_FILE);
    let mut bytes = std::fs::read(&log_path).unwrap();
    let clean_len = bytes.len();
    bytes.extend_from_slice(&[0, 0, 1, 0, 9, 9]);
    std::fs::write(&log_path, &bytes).unwrap();
    std::fs::write(dir.path().join(store::INDEX_FILE), b"junk").unwrap();

    let reopened = Ledger::open(dir.path(), genesis, Difficulty(1)).unwrap();
    assert_eq!(*reopened.snapshot(), b.state);
    assert_eq!(std::fs::metadata(&log_path).unwrap().len() as usize, clean_len);
    let idx = std::fs::read(dir.path().join(store::INDEX_FILE)).unwrap();
    assert_eq!(idx.len(), 8 * 4);
}

#[test]
fn ledger_rejects_foreign_genesis_on_open() {
    let dir = tempfile::tempdir().unwrap();
    let g1 = create_genesis(&key(1), 1, Difficulty(0));
    let g2 = create_genesis(&key(2), 1, Difficulty(0));
    Ledger::open(dir.path(), g1, Difficulty(0)).unwrap();
    assert!(Ledger::open(dir.path(), g2, Difficulty(0)).is_err());
}

#[test]
fn snapshots_are_immutable() {
    let mut b = ChainBuilder::new(Difficulty(0));
    let ledger = Ledger::new(b.genesis(), Difficulty(0)).unwrap();
    let snap = ledger.snapshot();
    b.mine(vec![]);
    ledger.append(b.state.tip().clone()).unwrap();
    assert_eq!(snap.len(), 1);
    assert_eq!(ledger.snapshot().len(), 2);
}

fn assert_send_sync<T: Send + Sync>() {}

#[test]
fn ledger_types_cross_threads() {
    assert_send_sync::<Ledger>();
    assert_send_sync::<ChainState>();
    assert_send_sync::<Block>();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn replay_equals_incremental_state(seed in any::<u64>(), blocks in 1usize..8) {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mut b = ChainBuilder::new(Difficulty(0));
        let client = key(2);
        b.grant(&client, client_permissions());
        let mut n = seed;
        for _ in 0..blocks {
            let mut txs = Vec::new();
            for _ in 0..rng.gen_range(0..4) {
                n = n.wrapping_add(1);
                let issuer = if rng.gen_bool(0.5) { b.master.clone() } else { client.clone() };
                txs.push(b.asset_tx(&issuer, asset(n)));
            }
            if rng.gen_bool(0.3) {
                let ms = b.next_ms();
                let flip = b.state.set_permission_tx(
                    key(3).address(), Permissions::of(&[Permission::Connect]),
                    rng.gen_bool(0.5), &b.master, ms).unwrap();
                txs.push(flip);
            }
            b.mine(txs);
        }
        let replayed = ChainState::replay(&b.state.to_blocks(), Difficulty(0)).unwrap();
        prop_assert_eq!(&replayed, &b.state);

        // uniqueness and permission soundness by independent scan
        let mut seen = std::collections::HashSet::new();
        for block in b.state.blocks().skip(1) {
            let prefix = ChainState::replay(
                &b.state.to_blocks()[..block.header.height as usize], Difficulty(0)).unwrap();
            for tx in &block.transactions {
                prop_assert!(prefix.has_permission(&tx.sender(), tx.kind().required_permission()));
                if let Some(a) = tx.asset() {
                    prop_assert!(seen.insert(a.md5_index.clone()));
                }
            }
        }
    }
}
