//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run alone with `cargo test -p anchorledger-service --test acceptance`.
//! A substring argument runs only the matching criteria.

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anchorledger::anchor::{
    check_anchors, check_anchors_encoded, sign_and_encode, AnchorConfig, AnchorError, AnchorLog, AnchorStatus,
    Anchorer, BackendError, MockChain, PublicChainBackend, Receipt, SignedTransaction, UnsignedTransaction, Wallet,
};
use anchorledger::anchor::eth::anchor_payload;
use anchorledger::hash::Hash32;
use anchorledger::ledger::store::{read_records, INDEX_FILE, LOG_FILE};
use anchorledger::ledger::{
    merkle_root, solve_proof_of_work, validate_encoded_chain, Block, BlockHeader, ChainState, Difficulty, Ledger,
    LedgerTransaction, Permission, Permissions, TxPayload,
};
use anchorledger::network::{AckStatus, Body, Node, NodeConfig, Transport, TransportError, WireMessage};
use anchorledger::testkit::{asset, client_permissions, key, random_asset, Cluster};
use anchorledger::{Address, SecretKey};
use anchorledger_service::api::dto::rfc1123;
use anchorledger_service::api::{router, AppState, ADMIN_SECRET_HEADER};
use anchorledger_service::ingest::{HttpSubmitter, IngestTask, Ingestor, RetryPolicy, TaskState};
use anchorledger_service::server::ServerHandle;
use anchorledger_service::testing::{Stack, TEST_ADMIN_SECRET};
use md5::Md5;
use rand::rngs::StdRng;
use rand::{Rng, RngCore, SeedableRng};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

// ---- pinned tolerances ----------------------------------------------------

const TAMPER_CHAIN_HEIGHT: u64 = 100;
const TAMPER_ASSETS: usize = 200;
const TAMPER_ANCHOR_TIPS: [u64; 2] = [50, 100];
const TAMPER_MUTATIONS: usize = 500;
const TAMPER_LIMIT: Duration = Duration::from_secs(60);

const ROLLBACK_TRIALS: usize = 50;
const ROLLBACK_FORK_HEIGHT: u64 = 40;
const ROLLBACK_ANCHOR_HEIGHT: u64 = 50;

const E2E_FILES: usize = 1000;
const E2E_MAX_BYTES: usize = 64 * 1024;
const E2E_LIMIT: Duration = Duration::from_secs(300);

const SIGNATURE_KEYS: usize = 1000;

const LATE_BY_BLOCKS: u64 = 50;

const CONFIRM_DEPTH: u64 = 6;
const D: Difficulty = Difficulty(1);

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

// ---- shared helpers -------------------------------------------------------

fn disk_cluster(root: &Path, n: usize) -> Cluster {
    let mut c = Cluster::new(0, D);
    for i in 0..n {
        let dir = node_dir(root, i);
        std::fs::create_dir_all(&dir).unwrap();
        let ledger = Arc::new(Ledger::open(&dir, c.genesis.clone(), D).unwrap());
        c.add_node(key(i as u64 + 1), ledger);
    }
    c
}

fn node_dir(root: &Path, i: usize) -> PathBuf {
    root.join(format!("node{i}"))
}

fn anchor_now(stack: &Stack) -> Result<anchorledger::anchor::AnchorRecord, AnchorError> {
    stack
        .anchorer
        .submit_anchor(&stack.node(0).snapshot(), None, stack.node(0).now())
}

/// Mines `txs` on top of `state` with the master's identity, skipping the
/// admission checks a real miner would run.
fn forge_block(state: &ChainState, txs: Vec<LedgerTransaction>, timestamp: u64) -> Block {
    let header = BlockHeader {
        height: state.tip_height() + 1,
        prev_hash: state.tip_hash(),
        tx_root: merkle_root(&txs),
        timestamp,
        nonce: 0,
        miner: key(1).address(),
    };
    Block {
        header: solve_proof_of_work(header, D),
        transactions: txs,
    }
}

fn post_json(client: &reqwest::blocking::Client, url: &str, body: &Value, secret: Option<&str>) -> (u16, Value) {
    let mut req = client.post(url).json(body);
    if let Some(s) = secret {
        req = req.header(ADMIN_SECRET_HEADER, s);
    }
    let resp = req.send().expect("request");
    let status = resp.status().as_u16();
    (status, resp.json().unwrap_or(Value::Null))
}

fn submission(record: &anchorledger::ledger::AssetRecord) -> Value {
    json!({
        "hash.md5": record.md5_index.as_str(),
        "hash.sha256": record.sha256.as_str(),
        "processed.ts": record.processed_ts,
        "source.uri": record.source_uri,
    })
}

// ---- 1. tamper detection --------------------------------------------------

fn tamper_detection() -> Outcome {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let cluster = disk_cluster(tmp.path(), 3);
    cluster.bootstrap();
    let stack = Stack::with_cluster(cluster, AnchorLog::in_memory());
    let mut rng = StdRng::seed_from_u64(0x7a3e_0001);

    let mut issued = 0;
    let mut anchors = Vec::new();
    while stack.node(0).snapshot().tip_height() < TAMPER_CHAIN_HEIGHT {
        let next = stack.node(0).snapshot().tip_height() + 1;
        let blocks_left = (TAMPER_CHAIN_HEIGHT - next + 1) as usize;
        let n = (TAMPER_ASSETS - issued).div_ceil(blocks_left);
        for _ in 0..n {
            let issuer = stack.node(1 + issued % 2);
            issuer.submit_asset(random_asset(&mut rng)).map_err(|e| e.to_string())?;
            issued += 1;
        }
        stack.cluster.mine();
        if TAMPER_ANCHOR_TIPS.contains(&next) {
            anchors.push(anchor_now(&stack).map_err(|e| e.to_string())?);
            stack.chain.advance(CONFIRM_DEPTH);
        }
    }
    let tips = stack.cluster.tips();
    ensure!(tips.iter().all(|t| *t == tips[0]), "nodes disagree on the tip");
    let state = stack.node(0).snapshot();
    ensure!(state.asset_count() == TAMPER_ASSETS, "{} assets on chain", state.asset_count());
    let anchored: Vec<u64> = anchors.iter().map(|a| a.private_height).collect();
    ensure!(anchored == [44, 94], "anchored heights {anchored:?}");
    let max_height = TAMPER_CHAIN_HEIGHT - CONFIRM_DEPTH;

    let stored = read_records(&node_dir(tmp.path(), 0).join(LOG_FILE)).map_err(|e| e.to_string())?;
    ensure!(stored.len() as u64 == TAMPER_CHAIN_HEIGHT + 1, "{} stored records", stored.len());
    ensure!(validate_encoded_chain(&stored, D).valid, "untouched chain fails validation");
    ensure!(check_anchors_encoded(&stored, &anchors).is_empty(), "untouched chain fails the cross-check");

    let mut detected = 0;
    for _ in 0..TAMPER_MUTATIONS {
        let mut records = stored.clone();
        let h = rng.gen_range(0..=max_height) as usize;
        let offset = rng.gen_range(0..records[h].len());
        let xor = rng.gen_range(1..=255u8);
        records[h][offset] ^= xor;
        let invalid = !validate_encoded_chain(&records, D).valid;
        let flagged = !check_anchors_encoded(&records, &anchors).is_empty();
        if invalid && flagged {
            detected += 1;
        }
    }
    let elapsed = started.elapsed();
    ensure!(detected == TAMPER_MUTATIONS, "{detected}/{TAMPER_MUTATIONS} mutations detected");
    ensure!(elapsed < TAMPER_LIMIT, "took {elapsed:.1?}, limit {TAMPER_LIMIT:?}");
    Ok(format!("{detected}/{TAMPER_MUTATIONS} mutations detected in {elapsed:.1?} (limit {TAMPER_LIMIT:?})"))
}

// ---- 2. rollback ----------------------------------------------------------

fn rollback_trial(seed: u64) -> Result<bool, String> {
    let stack = Stack::new(4);
    let attacker = stack.node(3).clone();
    let mut rng = StdRng::seed_from_u64(seed);
    let target_tip = ROLLBACK_ANCHOR_HEIGHT + CONFIRM_DEPTH;
    while stack.node(0).snapshot().tip_height() < target_tip {
        for _ in 0..rng.gen_range(1..=3) {
            let issuer = stack.node(rng.gen_range(1..=2));
            issuer.submit_asset(random_asset(&mut rng)).map_err(|e| e.to_string())?;
        }
        stack.cluster.mine();
    }
    let record = anchor_now(&stack).map_err(|e| e.to_string())?;
    ensure!(record.private_height == ROLLBACK_ANCHOR_HEIGHT, "anchored {}", record.private_height);

    let honest = stack.node(0).snapshot();
    let blocks = honest.to_blocks();
    let candidates: Vec<(u64, usize)> = (ROLLBACK_FORK_HEIGHT..=ROLLBACK_ANCHOR_HEIGHT)
        .flat_map(|h| (0..blocks[h as usize].transactions.len()).map(move |i| (h, i)))
        .collect();
    let (victim_height, victim_index) = candidates[rng.gen_range(0..candidates.len())];
    let victim = blocks[victim_height as usize].transactions[victim_index].clone();
    let victim_md5 = victim.asset().expect("asset tx").md5_index.clone();

    let mut alt = ChainState::replay(&blocks[..ROLLBACK_FORK_HEIGHT as usize], D).map_err(|(h, e)| format!("{h}: {e}"))?;
    let mut last_ts = 0;
    for block in &blocks[ROLLBACK_FORK_HEIGHT as usize..] {
        let txs: Vec<_> = block.transactions.iter().filter(|t| t.tx_id() != victim.tx_id()).cloned().collect();
        last_ts = block.header.timestamp + 1;
        let next = alt.mine_block(txs, key(1).address(), last_ts).map_err(|e| e.to_string())?;
        alt.append_block(next).map_err(|e| e.to_string())?;
    }
    for _ in 0..2 {
        last_ts += 60;
        let next = alt.mine_block(Vec::new(), key(1).address(), last_ts).map_err(|e| e.to_string())?;
        alt.append_block(next).map_err(|e| e.to_string())?;
    }
    let alt_tip = alt.tip_hash();
    attacker.ledger().replace(alt, ROLLBACK_FORK_HEIGHT).map_err(|e| e.to_string())?;
    for i in 0..3 {
        stack.node(i).sync_with_peer(attacker.id()).map_err(|e| e.to_string())?;
    }
    ensure!(stack.cluster.tips().iter().all(|t| *t == alt_tip), "not every node adopted the rewrite");
    ensure!(
        (0..4).all(|i| stack.node(i).snapshot().query_asset(&victim_md5).is_none()),
        "dropped asset still on chain"
    );

    let anchors = stack.anchorer.records();
    let mut all_detect = true;
    for i in 0..3 {
        let chain = stack.node(i).snapshot();
        let direct = chain.block_hash(ROLLBACK_ANCHOR_HEIGHT) != Some(record.private_blockhash);
        let audited = check_anchors(&chain.to_blocks(), &anchors)
            .iter()
            .any(|m| m.private_height == ROLLBACK_ANCHOR_HEIGHT);
        all_detect &= direct && audited;
    }
    Ok(all_detect)
}

fn rollback_detection() -> Outcome {
    let mut detected = 0;
    for t in 0..ROLLBACK_TRIALS {
        if rollback_trial(0x0b5e_0000 + t as u64)? {
            detected += 1;
        }
    }
    ensure!(detected == ROLLBACK_TRIALS, "{detected}/{ROLLBACK_TRIALS} rollbacks detected");
    Ok(format!("{detected}/{ROLLBACK_TRIALS} rollbacks from height {ROLLBACK_FORK_HEIGHT} detected at height {ROLLBACK_ANCHOR_HEIGHT}"))
}

// ---- 3. end to end --------------------------------------------------------

fn end_to_end() -> Outcome {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = StdRng::seed_from_u64(0xe2e0_0001);
    let mut files = Vec::with_capacity(E2E_FILES);
    for i in 0..E2E_FILES {
        let len = match i {
            0 => 0,
            1 => E2E_MAX_BYTES,
            _ => rng.gen_range(1..=E2E_MAX_BYTES),
        };
        let mut bytes = vec![0u8; len];
        rng.fill_bytes(&mut bytes);
        let path = tmp.path().join(format!("file-{i:04}.bin"));
        std::fs::write(&path, &bytes).unwrap();
        files.push(path);
    }

    let stack = Stack::new(1);
    let server = stack.serve();
    let submitter = HttpSubmitter::new(&server.url(), Duration::from_secs(30)).map_err(|e| e.to_string())?;
    let ingestor = Ingestor::new(Arc::new(submitter), RetryPolicy::default());
    let tasks = files
        .iter()
        .map(|p| IngestTask::for_file(p, "network.local/acceptance"))
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let done = ingestor.ingest_all(tasks, 8);
    let accepted = done.iter().filter(|t| t.state == TaskState::Accepted).count();
    ensure!(accepted == E2E_FILES, "{accepted}/{E2E_FILES} accepted");
    stack.mine(1);
    let record = stack.anchor_everything();
    ensure!(
        stack.anchorer.status(record.id).map(|r| r.status) == Some(AnchorStatus::Confirmed),
        "anchor not confirmed"
    );

    let bin = env!("CARGO_BIN_EXE_anchorledger");
    let url = server.url();
    let chunks: Vec<&[PathBuf]> = files.chunks(E2E_FILES.div_ceil(8)).collect();
    let failures: Vec<String> = std::thread::scope(|s| {
        let handles: Vec<_> = chunks
            .iter()
            .map(|chunk| {
                let url = &url;
                s.spawn(move || {
                    let mut bad = Vec::new();
                    for path in chunk.iter() {
                        if let Err(e) = verify_one(bin, url, path) {
                            bad.push(format!("{}: {e}", path.display()));
                        }
                    }
                    bad
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });
    let elapsed = started.elapsed();
    ensure!(failures.is_empty(), "{} files failed, first: {}", failures.len(), failures[0]);
    ensure!(elapsed < E2E_LIMIT, "took {elapsed:.1?}, limit {E2E_LIMIT:?}");
    Ok(format!("{E2E_FILES}/{E2E_FILES} files verified with exit 0 and oracle sha256 in {elapsed:.1?} (limit {E2E_LIMIT:?})"))
}

fn verify_one(bin: &str, api: &str, path: &Path) -> Result<(), String> {
    let out = Command::new(bin)
        .args(["verify", "--api", api])
        .arg(path)
        .env("RUST_LOG", "off")
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(out.status.code() == Some(0), "exit {:?}", out.status.code());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let (doc, verdict) = stdout.trim_end().rsplit_once('\n').ok_or("no document")?;
    ensure!(verdict == "VERDICT: VERIFIED", "{verdict}");
    let doc: Value = serde_json::from_str(doc).map_err(|e| e.to_string())?;
    let bytes = std::fs::read(path).map_err(|e| e.to_string())?;
    let sha = hex::encode(Sha256::digest(&bytes));
    let md5 = hex::encode(Md5::digest(&bytes));
    ensure!(doc["sha256"] == sha.as_str(), "sha256 {} != oracle {sha}", doc["sha256"]);
    ensure!(doc["asset"] == md5.as_str(), "md5 {} != oracle {md5}", doc["asset"]);
    Ok(())
}

// ---- 4. signatures --------------------------------------------------------

/// Produced once by eth-account's `Account.sign_transaction` for key
/// 0x11..11, nonce 19, gas price 4 gwei, gas 30422, to self, value 0 and
/// the ASCII hex of the block hash below as data.
const GOLDEN_RAW: &str = "f8a41384ee6b28008276d69419e7e376e7c213b7e7e7e46cc70a5dd086daff2a80b840303034346463656437353839643762316235313836346539383863306533303038643664653036613934396137626437333736623333653261383135613161381ca038e70821bf615cb95eb3ec829efdb0753ce764c20d2fad5d6145029c946e73dca006c152e923793fbefd5f5a7d1e12436ff7a89b7e39265fea28c9045c53293384";
const GOLDEN_BLOCKHASH: &str = "0044dced7589d7b1b51864e988c0e3008d6de06a949a7bd7376b33e2a815a1a8";

fn signatures() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5191_0001);
    let mut ok = 0;
    for _ in 0..SIGNATURE_KEYS {
        let key = SecretKey::random(&mut rng);
        let mut h = [0u8; 32];
        rng.fill_bytes(&mut h);
        let tx = UnsignedTransaction {
            nonce: rng.gen_range(0..1_000_000),
            gas_price: rng.gen_range(1..=100_000_000_000u128),
            gas_limit: 30_422,
            to: key.address(),
            value: 0,
            data: anchor_payload(&Hash32(h)),
        };
        let (raw, hash) = sign_and_encode(&tx, &key, None);
        let decoded = SignedTransaction::decode(&raw).map_err(|e| e.to_string())?;
        let sender = decoded.recover_sender().map_err(|e| e.to_string())?;
        if sender == key.address() && (decoded.v == 27 || decoded.v == 28) && decoded.hash() == hash {
            ok += 1;
        }
    }
    ensure!(ok == SIGNATURE_KEYS, "{ok}/{SIGNATURE_KEYS} recovered");

    let golden_key = SecretKey::from_hex(&"11".repeat(32)).unwrap();
    let tx = UnsignedTransaction {
        nonce: 19,
        gas_price: 4_000_000_000,
        gas_limit: 30_422,
        to: golden_key.address(),
        value: 0,
        data: anchor_payload(&Hash32::from_hex(GOLDEN_BLOCKHASH).unwrap()),
    };
    let (raw, _) = sign_and_encode(&tx, &golden_key, None);
    ensure!(hex::encode(&raw) == GOLDEN_RAW, "golden vector differs: {}", hex::encode(&raw));
    Ok(format!("{ok}/{SIGNATURE_KEYS} keys recover with v in {{27, 28}}; golden raw transaction matches"))
}

// ---- 5. refusals ----------------------------------------------------------

/// Forwards to the mock, optionally truncating raw transactions in flight.
struct Mangling {
    inner: Arc<MockChain>,
    mangle: AtomicBool,
}

impl PublicChainBackend for Mangling {
    fn id(&self) -> &str {
        self.inner.id()
    }
    fn get_nonce(&self, a: &Address) -> Result<u64, BackendError> {
        self.inner.get_nonce(a)
    }
    fn get_balance(&self, a: &Address) -> Result<u128, BackendError> {
        self.inner.get_balance(a)
    }
    fn estimate_gas(&self, from: &Address, tx: &UnsignedTransaction) -> Result<u64, BackendError> {
        self.inner.estimate_gas(from, tx)
    }
    fn gas_price(&self) -> Result<u128, BackendError> {
        self.inner.gas_price()
    }
    fn send_raw_transaction(&self, raw: &[u8]) -> Result<Hash32, BackendError> {
        if self.mangle.load(Ordering::SeqCst) {
            self.inner.send_raw_transaction(&raw[..raw.len() - 1])
        } else {
            self.inner.send_raw_transaction(raw)
        }
    }
    fn get_receipt(&self, h: &Hash32) -> Result<Option<Receipt>, BackendError> {
        self.inner.get_receipt(h)
    }
    fn get_raw_transaction(&self, h: &Hash32) -> Result<Option<Vec<u8>>, BackendError> {
        self.inner.get_raw_transaction(h)
    }
    fn head_height(&self) -> Result<u64, BackendError> {
        self.inner.head_height()
    }
}

fn refusals() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let log_path = tmp.path().join("anchors.jsonl");
    let stack = Stack::new(1);
    stack.mine(CONFIRM_DEPTH as usize + 1);
    let backend = Arc::new(Mangling {
        inner: stack.chain.clone(),
        mangle: AtomicBool::new(false),
    });
    let anchorer = Arc::new(Anchorer::new(
        Wallet::new(stack.wallet.clone()),
        vec![backend.clone()],
        AnchorConfig::default(),
        AnchorLog::open(&log_path).map_err(|e| e.to_string())?,
    ));
    let state = AppState::new(stack.node(0).clone(), anchorer.clone(), stack.settings.clone());
    let any: SocketAddr = "127.0.0.1:0".parse().unwrap();
    let server = ServerHandle::spawn(router(state), any).map_err(|e| e.to_string())?;
    let client = reqwest::blocking::Client::new();
    let trigger = format!("{}/anchors/trigger", server.url());
    let funded = stack.chain.balance_of(&stack.wallet.address());

    let mut lines = Vec::new();
    let cases: [(&str, u16, &dyn Fn(bool)); 3] = [
        ("zero balance", 402, &|on| stack.chain.set_balance(stack.wallet.address(), if on { 0 } else { funded })),
        ("unreachable backend", 502, &|on| stack.chain.set_reachable(!on)),
        ("rejected raw bytes", 422, &|on| backend.mangle.store(on, Ordering::SeqCst)),
    ];
    for (i, (name, want, toggle)) in cases.iter().enumerate() {
        toggle(true);
        let (status, body) = post_json(&client, &trigger, &json!({}), Some(TEST_ADMIN_SECRET));
        toggle(false);
        ensure!(status == *want, "{name}: HTTP {status}, expected {want}: {body}");
        ensure!(anchorer.records().is_empty(), "{name}: a record was persisted");
        ensure!(anchorer.failures().len() == i + 1, "{name}: {} audit entries", anchorer.failures().len());
        ensure!(stack.chain.pending_count() == 0, "{name}: a transaction reached the public chain");
        lines.push(format!("{name} -> {status}"));
    }
    drop(server);
    let reopened = AnchorLog::open(&log_path).map_err(|e| e.to_string())?;
    ensure!(reopened.records().is_empty(), "records on disk after refusals");
    ensure!(reopened.failures().len() == 3, "{} audit entries on disk", reopened.failures().len());

    let healthy = stack.serve();
    let (status, _) = post_json(&client, &format!("{}/anchors/trigger", healthy.url()), &json!({}), Some(TEST_ADMIN_SECRET));
    ensure!(status == 201, "healthy trigger answered {status}");
    Ok(format!("{}; 0 records, 3 audit entries persisted", lines.join(", ")))
}

// ---- 6. permissions -------------------------------------------------------

/// Replaces block replies from `rogue` with `forged`, as a malicious peer
/// serving a sync would.
struct Forging {
    inner: Arc<anchorledger::network::LoopbackNet>,
    rogue_addr: String,
    rogue_key: SecretKey,
    forged: std::sync::Mutex<Vec<Block>>,
}

impl Transport for Forging {
    fn request(&self, addr: &str, msg: &WireMessage, t: Duration) -> Result<WireMessage, TransportError> {
        let reply = self.inner.request(addr, msg, t)?;
        if addr != self.rogue_addr {
            return Ok(reply);
        }
        Ok(match reply.body {
            Body::BlocksReply(_) => WireMessage::sign(&self.rogue_key, Body::BlocksReply(self.forged.lock().unwrap().clone())),
            _ => reply,
        })
    }
}

fn permissions() -> Outcome {
    let cluster = Cluster::new(3, D);
    let victim_key = key(4);
    cluster.admit(1, client_permissions());
    cluster.admit(2, Permissions::of(&[Permission::Connect, Permission::Receive]));
    cluster.advance(1);
    cluster
        .master()
        .set_permission(victim_key.address(), client_permissions(), true)
        .map_err(|e| e.to_string())?;
    cluster.mine();
    for i in 1..3 {
        cluster.nodes[i].connect(cluster.master().listen_addr()).map_err(|e| e.to_string())?;
        cluster.nodes[i].sync_with_peer(cluster.master().id()).map_err(|e| e.to_string())?;
    }
    cluster.connect_all();
    let forging = Arc::new(Forging {
        inner: cluster.net.clone(),
        rogue_addr: cluster.nodes[2].listen_addr().to_string(),
        rogue_key: key(3),
        forged: Default::default(),
    });
    let victim = Node::with_clock(
        victim_key,
        "victim",
        Arc::new(Ledger::new(cluster.genesis.clone(), D).unwrap()),
        forging.clone(),
        NodeConfig::default(),
        cluster.clock(),
    );
    cluster.net.register(&victim);
    victim.connect(cluster.master().listen_addr()).map_err(|e| e.to_string())?;
    victim.sync_with_peer(cluster.master().id()).map_err(|e| e.to_string())?;
    let stack = Stack::with_cluster(cluster, AnchorLog::in_memory());
    let everyone = || (0..3).map(|i| stack.node(i).clone()).chain(std::iter::once(victim.clone()));
    let on_chain = |md5: &anchorledger::ledger::Md5Index| everyone().any(|n| n.snapshot().query_asset(md5).is_some());
    let in_pool = |tx: &LedgerTransaction| everyone().any(|n| n.pending().iter().any(|p| p.tx_id() == tx.tx_id()));
    let client = reqwest::blocking::Client::new();

    // a node that never held send
    let rogue = stack.node(2).clone();
    let rogue_api = ServerHandle::spawn(router(stack.state(2)), "127.0.0.1:0".parse().unwrap()).map_err(|e| e.to_string())?;
    let a = asset(9001);
    let (status, _) = post_json(&client, &format!("{}/assets", rogue_api.url()), &submission(&a), None);
    ensure!(status == 503, "API on a no-send node answered {status}");
    ensure!(rogue.submit_asset(a.clone()).is_err(), "no-send node pooled its own asset");
    let tx = LedgerTransaction::sign(&key(3), 1, TxPayload::AssetIssue(a.clone()));
    let report = rogue.propagate(Body::TxBroadcast(tx.clone()));
    ensure!(report.count(AckStatus::Rejected) == report.deliveries.len(), "a peer accepted the broadcast");
    ensure!(!in_pool(&tx), "broadcast tx reached a pending pool");
    let tip = stack.node(0).snapshot();
    let forged = forge_block(&tip, vec![tx.clone()], tip.tip().header.timestamp + 60);
    let report = rogue.propagate(Body::BlockBroadcast(forged.clone()));
    ensure!(report.count(AckStatus::Accepted) == 0, "a peer accepted the forged block");
    *forging.forged.lock().unwrap() = vec![forged];
    victim.connect(rogue.listen_addr()).map_err(|e| e.to_string())?;
    ensure!(victim.sync_with_peer(rogue.id()).is_err(), "sync accepted the forged block");
    ensure!(victim.is_flagged(&rogue.id()), "forging peer was not flagged");
    ensure!(
        (0..2).all(|i| stack.node(i).is_flagged(&rogue.id())),
        "peers kept a session with the forging node"
    );
    stack.mine(1);
    ensure!(!on_chain(&a.md5_index), "no-send asset reached a chain");
    let connected = || [stack.node(0).clone(), stack.node(1).clone(), victim.clone()].into_iter();

    // revocation
    let client_node = stack.node(1).clone();
    let b = asset(9002);
    let signed_while_allowed = tip
        .issue_asset_tx(b.clone(), &key(2), 2, std::iter::empty())
        .map_err(|e| e.to_string())?;
    stack.cluster.advance(1);
    stack
        .node(0)
        .set_permission(client_node.id(), Permissions::of(&[Permission::Send]), false)
        .map_err(|e| e.to_string())?;
    let revoke_block = stack.cluster.mine();
    ensure!(
        connected().all(|n| n.snapshot().tip_hash() == revoke_block.hash()
            && !n.snapshot().has_permission(&client_node.id(), Permission::Send)),
        "revocation not in effect everywhere at height {}",
        revoke_block.height()
    );
    let client_api = ServerHandle::spawn(router(stack.state(1)), "127.0.0.1:0".parse().unwrap()).map_err(|e| e.to_string())?;
    let (status, _) = post_json(&client, &format!("{}/assets", client_api.url()), &submission(&asset(9003)), None);
    ensure!(status == 503, "API on a revoked node answered {status}");
    ensure!(client_node.submit_transaction(signed_while_allowed.clone()).is_err(), "revoked node pooled a tx");
    let report = client_node.propagate(Body::TxBroadcast(signed_while_allowed.clone()));
    ensure!(report.count(AckStatus::Accepted) == 0, "a peer accepted a revoked node's tx");
    let after = stack.node(0).snapshot();
    let forged = forge_block(&after, vec![signed_while_allowed.clone()], after.tip().header.timestamp + 60);
    ensure!(stack.node(0).ledger().append(forged).is_err(), "block after revocation carried the revoked tx");
    let next = stack.cluster.mine();
    ensure!(
        next.transactions.iter().all(|t| t.sender() != client_node.id()),
        "block {} carries a revoked sender",
        next.height()
    );
    ensure!(!on_chain(&b.md5_index), "revoked node's asset reached a chain");
    Ok(format!(
        "no-send refused via API, tx broadcast, block broadcast and sync; revocation at block {} binds block {}",
        revoke_block.height(),
        next.height()
    ))
}

// ---- 7. replication -------------------------------------------------------

fn replication() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut cluster = disk_cluster(tmp.path(), 2);
    let late_key = key(3);
    cluster.admit(1, client_permissions());
    cluster.advance(1);
    cluster
        .master()
        .set_permission(late_key.address(), client_permissions(), true)
        .map_err(|e| e.to_string())?;
    cluster.mine();
    cluster.nodes[1].connect(cluster.master().listen_addr()).map_err(|e| e.to_string())?;
    cluster.nodes[1].sync_with_peer(cluster.master().id()).map_err(|e| e.to_string())?;
    cluster.connect_all();
    let start = cluster.master().snapshot().tip_height();
    for i in 0..LATE_BY_BLOCKS {
        cluster.nodes[1].submit_asset(asset(70_000 + i)).map_err(|e| e.to_string())?;
        cluster.mine();
    }
    let behind = cluster.master().snapshot().tip_height() - start;
    ensure!(behind >= LATE_BY_BLOCKS, "only {behind} blocks ahead");

    let dir = node_dir(tmp.path(), 2);
    std::fs::create_dir_all(&dir).unwrap();
    let ledger = Arc::new(Ledger::open(&dir, cluster.genesis.clone(), D).map_err(|e| e.to_string())?);
    let late = cluster.add_node(late_key, ledger);
    late.connect(cluster.master().listen_addr()).map_err(|e| e.to_string())?;
    cluster.connect_all();
    for (peer, r) in late.sync_all() {
        r.map_err(|e| format!("sync with {peer}: {e}"))?;
    }
    cluster.mine();
    let tips = cluster.tips();
    ensure!(tips.iter().all(|t| *t == tips[0]), "tips differ: {tips:?}");

    let height = cluster.master().snapshot().tip_height();
    drop(cluster);
    for file in [LOG_FILE, INDEX_FILE] {
        let bytes: Vec<Vec<u8>> = (0..3).map(|i| std::fs::read(node_dir(tmp.path(), i).join(file)).unwrap()).collect();
        ensure!(bytes[1] == bytes[0] && bytes[2] == bytes[0], "{file} differs between nodes");
    }
    let genesis = anchorledger::testkit::ChainBuilder::new(D).genesis();
    for i in 0..3 {
        let reopened = Ledger::open(&node_dir(tmp.path(), i), genesis.clone(), D).map_err(|e| e.to_string())?;
        ensure!(reopened.snapshot().tip_hash() == tips[0], "node{i} reopens at a different tip");
    }
    Ok(format!("node joining {behind} blocks late converged at height {height}; block logs byte-identical"))
}

// ---- 8. wire format -------------------------------------------------------

const RESPONSE_KEYS: [&str; 10] = [
    "asset",
    "confirmations",
    "ethStatus",
    "ethTxId",
    "issueTxId",
    "issued",
    "multiChainHash",
    "sha256",
    "source",
    "validated",
];

fn wire_format() -> Outcome {
    let stack = Stack::new(1);
    let server = stack.serve();
    let client = reqwest::blocking::Client::new();
    let fixture = asset(1);
    let (status, _) = post_json(&client, &format!("{}/assets", server.url()), &submission(&fixture), None);
    ensure!(status == 201, "submission answered {status}");
    stack.mine(1);
    stack.anchor_everything();
    let body = client
        .get(format!("{}/assets/{}", server.url(), fixture.md5_index.as_str()))
        .send()
        .and_then(|r| r.text())
        .map_err(|e| e.to_string())?;
    let doc: serde_json::Map<String, Value> = serde_json::from_str(&body).map_err(|e| e.to_string())?;
    let keys: BTreeSet<&str> = doc.keys().map(String::as_str).collect();
    ensure!(keys == RESPONSE_KEYS.into_iter().collect(), "keys {keys:?}");
    let confirmations = doc["confirmations"].as_str().ok_or("confirmations is not a string")?;
    ensure!(
        !confirmations.is_empty() && confirmations.bytes().all(|b| b.is_ascii_digit()),
        "confirmations {confirmations:?}"
    );
    for field in ["issued", "validated"] {
        let s = doc[field].as_str().ok_or(format!("{field} is not a string"))?;
        let t = chrono::NaiveDateTime::parse_from_str(s, "%a, %d %b %Y %H:%M:%S GMT")
            .map_err(|e| format!("{field} {s:?}: {e}"))?;
        ensure!(rfc1123(t.and_utc()) == s, "{field} {s:?} is not canonical");
    }
    ensure!(doc["ethStatus"] == "Confirmed", "ethStatus {}", doc["ethStatus"]);
    Ok(format!("ten keys, confirmations {confirmations:?}, issued {:?}", doc["issued"].as_str().unwrap()))
}

// ---- runner ---------------------------------------------------------------

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let filters: Vec<&str> = args.iter().map(String::as_str).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("tamper_detection", tamper_detection),
        ("rollback_detection", rollback_detection),
        ("end_to_end_round_trip", end_to_end),
        ("signature_soundness", signatures),
        ("refusal_paths", refusals),
        ("permission_enforcement", permissions),
        ("replication_convergence", replication),
        ("wire_format_fidelity", wire_format),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (name, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f)) {
            continue;
        }
        ran += 1;
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name:<24} {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name:<24} {detail} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
