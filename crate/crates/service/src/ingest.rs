//! File ingestion: hash each file, build the submission body and POST it to
//! the asset API with retry. Every state change of every task is appended
//! to a JSONL journal.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime};

use anchorledger::hashing::{hash_file, FileDigests};
use anchorledger::ledger::Md5Index;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::api::dto::{ErrorBody, IngestMessage};

/// Default `source.uri` prefix: `<network-name>/<connector>`.
pub const DEFAULT_SOURCE_PREFIX: &str = "network.anchorledger/ingest/file";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    #[serde(with = "millis")]
    pub initial: Duration,
    pub factor: u32,
    #[serde(with = "millis")]
    pub cap: Duration,
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            initial: Duration::from_secs(1),
            factor: 2,
            cap: Duration::from_secs(60),
            max_attempts: 8,
        }
    }
}

impl RetryPolicy {
    /// Wait after the `attempt`-th failed attempt (1-based).
    pub fn delay(&self, attempt: u32) -> Duration {
        let mut d = self.initial;
        for _ in 1..attempt {
            d = d.saturating_mul(self.factor);
            if d >= self.cap {
                return self.cap;
            }
        }
        d.min(self.cap)
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Pending,
    Submitted,
    Accepted,
    /// The API already held this md5 (HTTP 409).
    AcceptedDuplicate,
    Failed,
}

impl TaskState {
    pub fn is_terminal(self) -> bool {
        matches!(self, TaskState::Accepted | TaskState::AcceptedDuplicate | TaskState::Failed)
    }

    pub fn is_success(self) -> bool {
        matches!(self, TaskState::Accepted | TaskState::AcceptedDuplicate)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestTask {
    pub path: PathBuf,
    pub source_uri: String,
    pub parent_md5: Option<Md5Index>,
    pub attempts: u32,
    pub state: TaskState,
    pub md5: Option<Md5Index>,
    /// Transaction id from the API, once accepted.
    pub tx_id: Option<String>,
    pub detail: Option<String>,
}

impl IngestTask {
    pub fn new(path: impl Into<PathBuf>, source_uri: impl Into<String>) -> Self {
        IngestTask {
            path: path.into(),
            source_uri: source_uri.into(),
            parent_md5: None,
            attempts: 0,
            state: TaskState::Pending,
            md5: None,
            tx_id: None,
            detail: None,
        }
    }

    pub fn with_parent(mut self, parent: Md5Index) -> Self {
        self.parent_md5 = Some(parent);
        self
    }

    /// Task for `path` with `source.uri` = `<prefix><absolute path>`.
    pub fn for_file(path: &Path, prefix: &str) -> io::Result<Self> {
        let abs = std::path::absolute(path)?;
        Ok(Self::new(path, source_uri_for(prefix, &abs)))
    }
}

pub fn source_uri_for(prefix: &str, absolute: &Path) -> String {
    let p = absolute.to_string_lossy();
    let sep = if p.starts_with('/') { "" } else { "/" };
    format!("{}{sep}{p}", prefix.trim_end_matches('/'))
}

pub fn build_ingest_message(task: &IngestTask, hashes: &FileDigests, now_ms: u64) -> IngestMessage {
    IngestMessage {
        md5: hashes.md5.clone(),
        sha256: hashes.sha256.clone(),
        processed_ts: now_ms,
        source_uri: task.source_uri.clone(),
        parent_md5: task.parent_md5.clone(),
        metadata: Default::default(),
    }
}

// ---- journal --------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub at: DateTime<Utc>,
    pub path: PathBuf,
    pub state: TaskState,
    pub attempt: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub md5: Option<Md5Index>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Append-only, line-delimited transition log. One writer at a time.
#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: Mutex<File>,
}

impl Journal {
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Journal {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn record(&self, task: &IngestTask) -> io::Result<()> {
        let entry = JournalEntry {
            at: Utc::now(),
            path: task.path.clone(),
            state: task.state,
            attempt: task.attempts,
            md5: task.md5.clone(),
            detail: task.detail.clone(),
        };
        let mut line = serde_json::to_vec(&entry).map_err(io::Error::other)?;
        line.push(b'\n');
        let mut f = self.file.lock().unwrap();
        f.write_all(&line)?;
        f.flush()
    }

    /// Every entry in order. A torn final line is skipped.
    pub fn replay(path: &Path) -> io::Result<Vec<JournalEntry>> {
        let mut out = Vec::new();
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line) {
                Ok(e) => out.push(e),
                Err(e) => tracing::warn!(error = %e, "skipping unreadable journal line"),
            }
        }
        Ok(out)
    }

    /// Last recorded state per path.
    pub fn final_states(path: &Path) -> io::Result<HashMap<PathBuf, TaskState>> {
        Ok(Self::replay(path)?.into_iter().map(|e| (e.path, e.state)).collect())
    }
}

// ---- submission -----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubmitOutcome {
    Created { tx_id: String },
    Duplicate,
    /// Worth retrying: unreachable, 429 or 5xx.
    Transient(String),
    Fatal(String),
}

pub trait Submitter: Send + Sync {
    fn submit(&self, msg: &IngestMessage) -> SubmitOutcome;
}

/// POSTs to `<api>/assets`.
#[derive(Debug, Clone)]
pub struct HttpSubmitter {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpSubmitter {
    pub fn new(api: &str, timeout: Duration) -> reqwest::Result<Self> {
        Ok(HttpSubmitter {
            url: format!("{}/assets", api.trim_end_matches('/')),
            client: reqwest::blocking::Client::builder().timeout(timeout).build()?,
        })
    }
}

impl Submitter for HttpSubmitter {
    fn submit(&self, msg: &IngestMessage) -> SubmitOutcome {
        let resp = match self.client.post(&self.url).json(msg).send() {
            Ok(r) => r,
            Err(e) => return SubmitOutcome::Transient(e.to_string()),
        };
        let status = resp.status();
        let text = resp.text().unwrap_or_default();
        let reason = || {
            serde_json::from_str::<ErrorBody>(&text)
                .map(|b| match b.field {
                    Some(f) => format!("{status}: {f}: {}", b.error),
                    None => format!("{status}: {}", b.error),
                })
                .unwrap_or_else(|_| format!("{status}: {text}"))
        };
        match status.as_u16() {
            201 => {
                let tx_id = serde_json::from_str::<crate::api::dto::Submitted>(&text)
                    .map(|s| s.tx_id)
                    .unwrap_or_default();
                SubmitOutcome::Created { tx_id }
            }
            409 => SubmitOutcome::Duplicate,
            429 | 500..=599 => SubmitOutcome::Transient(reason()),
            _ => SubmitOutcome::Fatal(reason()),
        }
    }
}

type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// Drives tasks to a terminal state.
#[derive(Clone)]
pub struct Ingestor {
    submitter: Arc<dyn Submitter>,
    retry: RetryPolicy,
    journal: Option<Arc<Journal>>,
    sleep: Sleeper,
}

impl Ingestor {
    pub fn new(submitter: Arc<dyn Submitter>, retry: RetryPolicy) -> Self {
        Ingestor {
            submitter,
            retry,
            journal: None,
            sleep: Arc::new(std::thread::sleep),
        }
    }

    pub fn with_journal(mut self, journal: Arc<Journal>) -> Self {
        self.journal = Some(journal);
        self
    }

    /// Replaces the real sleep, e.g. to record backoff without waiting.
    pub fn with_sleeper(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Arc::new(sleep);
        self
    }

    fn transition(&self, task: &mut IngestTask, state: TaskState, detail: Option<String>) {
        task.state = state;
        task.detail = detail;
        if let Some(j) = &self.journal {
            if let Err(e) = j.record(task) {
                tracing::error!(error = %e, path = %task.path.display(), "journal write failed");
            }
        }
    }

    /// Hash, build, submit; retries transient failures per the policy.
    pub fn ingest_path(&self, mut task: IngestTask) -> IngestTask {
        self.transition(&mut task, TaskState::Pending, None);
        let hashes = match hash_file(&task.path) {
            Ok(h) => h,
            Err(e) => {
                self.transition(&mut task, TaskState::Failed, Some(format!("cannot read file: {e}")));
                return task;
            }
        };
        task.md5 = Some(hashes.md5.clone());
        let now_ms = Utc::now().timestamp_millis().max(0) as u64;
        let msg = build_ingest_message(&task, &hashes, now_ms);
        loop {
            task.attempts += 1;
            self.transition(&mut task, TaskState::Submitted, None);
            match self.submitter.submit(&msg) {
                SubmitOutcome::Created { tx_id } => {
                    task.tx_id = Some(tx_id);
                    self.transition(&mut task, TaskState::Accepted, None);
                    return task;
                }
                SubmitOutcome::Duplicate => {
                    self.transition(&mut task, TaskState::AcceptedDuplicate, Some("already notarized".into()));
                    return task;
                }
                SubmitOutcome::Fatal(reason) => {
                    self.transition(&mut task, TaskState::Failed, Some(reason));
                    return task;
                }
                SubmitOutcome::Transient(reason) if task.attempts >= self.retry.max_attempts => {
                    let detail = format!("gave up after {} attempts: {reason}", task.attempts);
                    self.transition(&mut task, TaskState::Failed, Some(detail));
                    return task;
                }
                SubmitOutcome::Transient(reason) => {
                    let wait = self.retry.delay(task.attempts);
                    tracing::info!(path = %task.path.display(), attempt = task.attempts, ?wait, %reason, "retrying");
                    self.transition(&mut task, TaskState::Pending, Some(reason));
                    (self.sleep)(wait);
                }
            }
        }
    }

    /// Runs `tasks` with at most `parallelism` in flight. Results keep the
    /// input order.
    pub fn ingest_all(&self, tasks: Vec<IngestTask>, parallelism: usize) -> Vec<IngestTask> {
        let n = tasks.len();
        let queue = Mutex::new(tasks.into_iter().enumerate());
        let results = Mutex::new(vec![None; n]);
        std::thread::scope(|s| {
            for _ in 0..parallelism.clamp(1, n.max(1)) {
                s.spawn(|| loop {
                    let Some((i, task)) = queue.lock().unwrap().next() else { break };
                    let done = self.ingest_path(task);
                    results.lock().unwrap()[i] = Some(done);
                });
            }
        });
        results.into_inner().unwrap().into_iter().map(|t| t.expect("every task ran")).collect()
    }

    /// Ingests `derived` with `parent.md5` set. An unknown parent comes back
    /// as a failed task.
    pub fn register_derived_asset(&self, parent_md5: Md5Index, derived: &Path, prefix: &str) -> io::Result<IngestTask> {
        Ok(self.ingest_path(IngestTask::for_file(derived, prefix)?.with_parent(parent_md5)))
    }
}

/// Regular files under `dir`, recursively, in path order.
pub fn scan(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(io::Error::other)?;
        if entry.file_type().is_file() {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Seen {
    len: u64,
    modified: Option<SystemTime>,
}

/// Polls `dir` every `interval` and ingests each new or changed file once
/// its size and mtime held still for one interval. Returns when `stop` is
/// set.
pub fn watch(
    ingestor: &Ingestor,
    dir: &Path,
    prefix: &str,
    interval: Duration,
    parallelism: usize,
    stop: &AtomicBool,
    mut on_done: impl FnMut(&IngestTask),
) -> io::Result<()> {
    let mut done: HashMap<PathBuf, Seen> = HashMap::new();
    let mut candidates: HashMap<PathBuf, Seen> = HashMap::new();
    while !stop.load(Ordering::SeqCst) {
        let mut ready = Vec::new();
        for path in scan(dir)? {
            let Ok(meta) = std::fs::metadata(&path) else { continue };
            let seen = Seen {
                len: meta.len(),
                modified: meta.modified().ok(),
            };
            if done.get(&path) == Some(&seen) {
                continue;
            }
            if candidates.insert(path.clone(), seen) == Some(seen) {
                ready.push((path, seen));
            }
        }
        let tasks = ready
            .iter()
            .map(|(p, _)| IngestTask::for_file(p, prefix))
            .collect::<io::Result<Vec<_>>>()?;
        for task in ingestor.ingest_all(tasks, parallelism) {
            on_done(&task);
        }
        for (path, seen) in ready {
            candidates.remove(&path);
            done.insert(path, seen);
        }
        let mut slept = Duration::ZERO;
        while slept < interval && !stop.load(Ordering::SeqCst) {
            let step = Duration::from_millis(50).min(interval - slept);
            std::thread::sleep(step);
            slept += step;
        }
    }
    Ok(())
}
