//! Append-only JSONL log of anchor submissions, status changes and refused
//! attempts.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::crypto::Address;
use crate::hash::{BlockHash, Hash32};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorStatus {
    Submitted,
    Confirmed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorRecord {
    pub id: u64,
    pub anchored_at: DateTime<Utc>,
    pub private_blockhash: BlockHash,
    pub private_height: u64,
    #[serde(with = "prefixed_hash")]
    pub eth_tx_hash: Hash32,
    pub wallet_address: Address,
    pub backend: String,
    pub status: AnchorStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedAttempt {
    pub at: DateTime<Utc>,
    pub backend: Option<String>,
    pub private_height: Option<u64>,
    pub private_blockhash: Option<BlockHash>,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LogEntry {
    Anchor(AnchorRecord),
    Status {
        id: u64,
        status: AnchorStatus,
        at: DateTime<Utc>,
    },
    FailedAttempt(FailedAttempt),
}

/// In-memory view over the log file. Every mutation is written and flushed
/// before the view changes.
#[derive(Debug, Default)]
pub struct AnchorLog {
    path: Option<PathBuf>,
    file: Option<File>,
    records: Vec<AnchorRecord>,
    failures: Vec<FailedAttempt>,
    by_height: BTreeMap<u64, Vec<u64>>,
}

impl AnchorLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) the log at `path` and replays it. A torn last line
    /// is ignored; any other malformed line is an error.
    pub fn open(path: &Path) -> io::Result<Self> {
        let mut log = AnchorLog {
            path: Some(path.to_path_buf()),
            ..Self::default()
        };
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            let lines: Vec<String> = reader.lines().collect::<io::Result<_>>()?;
            let last = lines.len().saturating_sub(1);
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<LogEntry>(line) {
                    Ok(entry) => log.apply(entry),
                    Err(_) if i == last => break,
                    Err(e) => {
                        return Err(io::Error::new(
                            io::ErrorKind::InvalidData,
                            format!("{}:{}: {e}", path.display(), i + 1),
                        ))
                    }
                }
            }
        }
        log.file = Some(OpenOptions::new().create(true).append(true).open(path)?);
        Ok(log)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn apply(&mut self, entry: LogEntry) {
        match entry {
            LogEntry::Anchor(r) => {
                self.by_height.entry(r.private_height).or_default().push(r.id);
                self.records.push(r);
            }
            LogEntry::Status { id, status, .. } => {
                if let Some(r) = self.records.iter_mut().find(|r| r.id == id) {
                    r.status = status;
                }
            }
            LogEntry::FailedAttempt(f) => self.failures.push(f),
        }
    }

    fn write(&mut self, entry: &LogEntry) -> io::Result<()> {
        if let Some(file) = self.file.as_mut() {
            let mut line = serde_json::to_string(entry).map_err(io::Error::other)?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.sync_data()?;
        }
        Ok(())
    }

    pub fn next_id(&self) -> u64 {
        self.records.last().map_or(1, |r| r.id + 1)
    }

    /// Appends a record. Its `id` is replaced with the next free id.
    pub fn append(&mut self, mut record: AnchorRecord) -> io::Result<AnchorRecord> {
        record.id = self.next_id();
        let entry = LogEntry::Anchor(record.clone());
        self.write(&entry)?;
        self.apply(entry);
        Ok(record)
    }

    pub fn set_status(&mut self, id: u64, status: AnchorStatus, at: DateTime<Utc>) -> io::Result<()> {
        if self.get(id).is_some_and(|r| r.status == status) {
            return Ok(());
        }
        let entry = LogEntry::Status { id, status, at };
        self.write(&entry)?;
        self.apply(entry);
        Ok(())
    }

    pub fn record_failure(&mut self, failure: FailedAttempt) -> io::Result<()> {
        let entry = LogEntry::FailedAttempt(failure);
        self.write(&entry)?;
        self.apply(entry);
        Ok(())
    }

    pub fn get(&self, id: u64) -> Option<&AnchorRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// All records, oldest first.
    pub fn records(&self) -> &[AnchorRecord] {
        &self.records
    }

    pub fn failures(&self) -> &[FailedAttempt] {
        &self.failures
    }

    pub fn last(&self) -> Option<&AnchorRecord> {
        self.records.last()
    }

    /// Newest first; `page` starts at 1.
    pub fn page(&self, page: usize, per_page: usize) -> Vec<AnchorRecord> {
        let skip = page.saturating_sub(1).saturating_mul(per_page);
        self.records.iter().rev().skip(skip).take(per_page).cloned().collect()
    }

    /// Records whose anchored height is within `range`.
    pub fn in_height_range(&self, range: std::ops::RangeInclusive<u64>) -> Vec<&AnchorRecord> {
        self.by_height
            .range(range)
            .flat_map(|(_, ids)| ids.iter().filter_map(|id| self.get(*id)))
            .collect()
    }

    /// Earliest non-failed anchor whose anchored height is at or above
    /// `height`, i.e. the first anchor that covers a block at that height.
    pub fn covering(&self, height: u64) -> Option<&AnchorRecord> {
        self.by_height
            .range(height..)
            .flat_map(|(_, ids)| ids.iter().filter_map(|id| self.get(*id)))
            .filter(|r| r.status != AnchorStatus::Failed)
            .min_by_key(|r| (r.anchored_at, r.id))
    }
}

pub(crate) mod prefixed_hash {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::hash::Hash32;

    pub fn serialize<S: Serializer>(h: &Hash32, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("0x{}", h.to_hex()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Hash32, D::Error> {
        let s = String::deserialize(d)?;
        let body = s.strip_prefix("0x").unwrap_or(&s);
        Hash32::from_hex(&body.to_ascii_lowercase()).map_err(serde::de::Error::custom)
    }
}
