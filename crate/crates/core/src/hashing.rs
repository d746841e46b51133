//! Streaming md5 + SHA-256 over files.

use std::fs::File;
use std::io::{self, Read};
use std::path::Path;

use md5::Md5;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::ledger::{Md5Index, Sha256Hex};

const CHUNK: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigests {
    pub md5: Md5Index,
    pub sha256: Sha256Hex,
    pub byte_count: u64,
}

/// Hashes everything `reader` yields with both digests in one pass. Memory
/// use is one fixed-size buffer regardless of input length.
pub fn hash_reader<R: Read>(mut reader: R) -> io::Result<FileDigests> {
    let mut md5 = Md5::new();
    let mut sha = Sha256::new();
    let mut buf = vec![0u8; CHUNK];
    let mut total = 0u64;
    loop {
        let n = match reader.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        };
        md5.update(&buf[..n]);
        sha.update(&buf[..n]);
        total += n as u64;
    }
    Ok(FileDigests {
        md5: Md5Index::parse(&hex::encode(md5.finalize())).expect("md5 renders as 32 hex chars"),
        sha256: Sha256Hex::parse(&hex::encode(sha.finalize()))
            .expect("sha256 renders as 64 hex chars"),
        byte_count: total,
    })
}

pub fn hash_file(path: &Path) -> io::Result<FileDigests> {
    hash_reader(File::open(path)?)
}

pub fn hash_bytes(data: &[u8]) -> FileDigests {
    hash_reader(data).expect("reading from a slice cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn empty_file_vectors() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let d = hash_file(f.path()).unwrap();
        assert_eq!(d.md5.as_str(), "d41d8cd98f00b204e9800998ecf8427e");
        assert_eq!(
            d.sha256.as_str(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(d.byte_count, 0);
    }

    #[test]
    fn abc_vectors() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"abc").unwrap();
        let d = hash_file(f.path()).unwrap();
        assert_eq!(d.md5.as_str(), "900150983cd24fb0d6963f7d28e17f72");
        assert_eq!(
            d.sha256.as_str(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn missing_path_is_io_error() {
        assert!(hash_file(Path::new("/nonexistent/definitely/not/here")).is_err());
    }

    #[test]
    fn sparse_gigabyte_streams() {
        // 1 GiB of zeros without allocating it: the reader is a Take<Repeat>.
        let reader = io::repeat(0).take(1 << 30);
        let d = hash_reader(reader).unwrap();
        assert_eq!(d.byte_count, 1 << 30);
        // Frozen from: head -c 1073741824 /dev/zero | md5sum
        assert_eq!(d.md5.as_str(), "cd573cfaace07e7949bc0c46028904ff");
    }
}
