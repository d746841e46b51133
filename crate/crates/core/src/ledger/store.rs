//! Append-only block log.
//!
//! `blocks.log` holds one record per block: a `u32` big-endian length
//! followed by the canonical block encoding. `blocks.idx` holds one `u64`
//! big-endian byte offset per record and is rebuilt from the log whenever it
//! disagrees with it.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::block::Block;

pub const LOG_FILE: &str = "blocks.log";
pub const INDEX_FILE: &str = "blocks.idx";

#[derive(Debug)]
pub struct BlockLog {
    dir: PathBuf,
    log: File,
    offsets: Vec<u64>,
    end: u64,
}

/// Splits a log image into its records. A torn final record (crash during
/// append) is dropped; its start offset is returned as the clean length.
pub fn split_records(bytes: &[u8]) -> (Vec<&[u8]>, u64) {
    let mut out = Vec::new();
    let mut pos = 0usize;
    while pos + 4 <= bytes.len() {
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        let end = pos + 4 + len;
        if end > bytes.len() {
            break;
        }
        out.push(&bytes[pos + 4..end]);
        pos = end;
    }
    (out, pos as u64)
}

/// Reads the raw records of a log file without decoding them.
pub fn read_records(path: &Path) -> io::Result<Vec<Vec<u8>>> {
    let bytes = fs::read(path)?;
    let (records, _) = split_records(&bytes);
    Ok(records.into_iter().map(<[u8]>::to_vec).collect())
}

impl BlockLog {
    /// Opens (or creates) the log in `dir`, returning the stored records.
    pub fn open(dir: &Path) -> io::Result<(Self, Vec<Vec<u8>>)> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOG_FILE);
        let mut log = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)?;
        let mut bytes = Vec::new();
        log.read_to_end(&mut bytes)?;
        let (records, clean_len) = split_records(&bytes);
        let records: Vec<Vec<u8>> = records.into_iter().map(<[u8]>::to_vec).collect();
        if clean_len != bytes.len() as u64 {
            tracing::warn!(
                dropped = bytes.len() as u64 - clean_len,
                "truncating torn record at end of block log"
            );
            log.set_len(clean_len)?;
            log.sync_all()?;
        }
        let mut offsets = Vec::with_capacity(records.len());
        let mut off = 0u64;
        for r in &records {
            offsets.push(off);
            off += 4 + r.len() as u64;
        }
        let store = BlockLog {
            dir: dir.to_path_buf(),
            log,
            offsets,
            end: clean_len,
        };
        store.sync_index_if_stale()?;
        Ok((store, records))
    }

    fn index_bytes(&self) -> Vec<u8> {
        self.offsets.iter().flat_map(|o| o.to_be_bytes()).collect()
    }

    fn sync_index_if_stale(&self) -> io::Result<()> {
        let path = self.dir.join(INDEX_FILE);
        let want = self.index_bytes();
        if fs::read(&path).ok().as_deref() != Some(want.as_slice()) {
            write_atomically(&path, &want)?;
        }
        Ok(())
    }

    pub fn len(&self) -> u64 {
        self.offsets.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join(LOG_FILE)
    }

    pub fn append(&mut self, block: &Block) -> io::Result<()> {
        let body = block.encode();
        let mut rec = Vec::with_capacity(4 + body.len());
        rec.extend_from_slice(&(body.len() as u32).to_be_bytes());
        rec.extend_from_slice(&body);
        self.log.write_all(&rec)?;
        self.log.sync_data()?;
        self.offsets.push(self.end);
        self.end += rec.len() as u64;
        let mut idx = OpenOptions::new()
            .append(true)
            .create(true)
            .open(self.dir.join(INDEX_FILE))?;
        idx.write_all(&self.offsets.last().unwrap().to_be_bytes())?;
        Ok(())
    }

    /// Drops every record at or above `height`. Only used when a longer fork
    /// replaces the local branch.
    pub fn truncate(&mut self, height: u64) -> io::Result<()> {
        if height >= self.len() {
            return Ok(());
        }
        let cut = self.offsets[height as usize];
        self.log.set_len(cut)?;
        self.log.seek(SeekFrom::End(0))?;
        self.log.sync_all()?;
        self.offsets.truncate(height as usize);
        self.end = cut;
        write_atomically(&self.dir.join(INDEX_FILE), &self.index_bytes())
    }
}

fn write_atomically(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}
