//! Client-side verification of a local file against the API.

use std::path::Path;
use std::time::Duration;

use anchorledger::hashing::{hash_file, FileDigests};
use serde_json::Value;

use crate::api::dto::{EthStatus, VerificationResponse};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    /// Found, SHA-256 matches, anchor confirmed.
    Verified,
    NotAnchored,
    Pending,
    NotFound,
    /// The server's SHA-256 differs from the local file's.
    Sha256Mismatch,
    Error(String),
}

impl Verdict {
    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::Verified => 0,
            Verdict::NotAnchored | Verdict::Pending => 1,
            Verdict::NotFound => 2,
            Verdict::Sha256Mismatch => 3,
            Verdict::Error(_) => 4,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Verified => "VERIFIED",
            Verdict::NotAnchored => "NOT_ANCHORED",
            Verdict::Pending => "PENDING",
            Verdict::NotFound => "NOT_FOUND",
            Verdict::Sha256Mismatch => "SHA256_MISMATCH",
            Verdict::Error(_) => "ERROR",
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub local: Option<FileDigests>,
    /// The server's document exactly as received.
    pub document: Option<Value>,
    pub verdict: Verdict,
}

impl VerifyReport {
    /// Pretty document (unless `quiet`) followed by the verdict line.
    pub fn render(&self, quiet: bool) -> String {
        let mut out = String::new();
        if !quiet {
            if let Some(doc) = &self.document {
                out.push_str(&serde_json::to_string_pretty(doc).unwrap_or_default());
                out.push('\n');
            }
            if let Verdict::Error(e) = &self.verdict {
                out.push_str(&format!("error: {e}\n"));
            }
        }
        out.push_str(&format!("VERDICT: {}\n", self.verdict.label()));
        out
    }
}

pub struct Verifier {
    api: String,
    client: reqwest::blocking::Client,
}

impl Verifier {
    pub fn new(api: &str, timeout: Duration) -> reqwest::Result<Self> {
        Ok(Verifier {
            api: api.trim_end_matches('/').to_string(),
            client: reqwest::blocking::Client::builder().timeout(timeout).build()?,
        })
    }

    /// Hashes `path` locally, fetches the verification document and
    /// cross-checks the SHA-256 before judging the anchor status.
    pub fn verify_file(&self, path: &Path) -> VerifyReport {
        let local = match hash_file(path) {
            Ok(d) => d,
            Err(e) => {
                return VerifyReport {
                    local: None,
                    document: None,
                    verdict: Verdict::Error(format!("cannot read {}: {e}", path.display())),
                }
            }
        };
        let (document, verdict) = self.fetch(&local);
        VerifyReport {
            local: Some(local),
            document,
            verdict,
        }
    }

    fn fetch(&self, local: &FileDigests) -> (Option<Value>, Verdict) {
        let url = format!("{}/assets/{}", self.api, local.md5);
        let resp = match self.client.get(&url).send() {
            Ok(r) => r,
            Err(e) => return (None, Verdict::Error(e.to_string())),
        };
        let status = resp.status();
        if status.as_u16() == 404 {
            return (None, Verdict::NotFound);
        }
        let doc: Value = match resp.json() {
            Ok(v) => v,
            Err(e) => return (None, Verdict::Error(format!("{status}: unreadable body: {e}"))),
        };
        if !status.is_success() {
            return (Some(doc), Verdict::Error(format!("server answered {status}")));
        }
        let verdict = judge(local, &doc);
        (Some(doc), verdict)
    }
}

/// Verdict for a 200 response `doc` about a file with digests `local`.
pub fn judge(local: &FileDigests, doc: &Value) -> Verdict {
    let parsed: VerificationResponse = match serde_json::from_value(doc.clone()) {
        Ok(p) => p,
        Err(e) => return Verdict::Error(format!("unexpected document: {e}")),
    };
    if parsed.sha256 != local.sha256.as_str() || parsed.asset != local.md5.as_str() {
        return Verdict::Sha256Mismatch;
    }
    match parsed.eth_status {
        EthStatus::Confirmed => Verdict::Verified,
        EthStatus::Pending => Verdict::Pending,
        EthStatus::NotAnchored => Verdict::NotAnchored,
    }
}
