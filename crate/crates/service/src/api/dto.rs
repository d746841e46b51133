//! Request and response documents.

use std::collections::BTreeMap;

use anchorledger::anchor::{AnchorRecord, AnchorStatus, AnchorStatusReport};
use anchorledger::ledger::{AssetRecord, AssetView, Md5Index, Sha256Hex};
use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const KEY_MD5: &str = "hash.md5";
pub const KEY_SHA256: &str = "hash.sha256";
pub const KEY_PROCESSED: &str = "processed.ts";
pub const KEY_SOURCE: &str = "source.uri";
pub const KEY_PARENT: &str = "parent.md5";
pub const KEY_METADATA: &str = "metadata";

const RFC1123: &str = "%a, %d %b %Y %H:%M:%S GMT";

pub fn rfc1123(t: DateTime<Utc>) -> String {
    t.format(RFC1123).to_string()
}

pub fn parse_rfc1123(s: &str) -> Option<DateTime<Utc>> {
    chrono::NaiveDateTime::parse_from_str(s, RFC1123)
        .ok()
        .map(|n| n.and_utc())
}

/// A submission body. Keys use the dotted names of the ingest pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestMessage {
    #[serde(rename = "hash.md5")]
    pub md5: Md5Index,
    #[serde(rename = "hash.sha256")]
    pub sha256: Sha256Hex,
    #[serde(rename = "processed.ts")]
    pub processed_ts: u64,
    #[serde(rename = "source.uri")]
    pub source_uri: String,
    #[serde(rename = "parent.md5", default, skip_serializing_if = "Option::is_none")]
    pub parent_md5: Option<Md5Index>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

/// Why a submission body was refused, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[error("{field}: {reason}")]
pub struct FieldProblem {
    pub field: String,
    pub reason: String,
}

fn problem(field: &str, reason: impl Into<String>) -> FieldProblem {
    FieldProblem {
        field: field.to_string(),
        reason: reason.into(),
    }
}

impl IngestMessage {
    /// Field-by-field parse so a refusal can say which field is wrong.
    pub fn from_json(body: &Value) -> Result<Self, FieldProblem> {
        let obj = body.as_object().ok_or_else(|| problem("body", "expected a JSON object"))?;
        let text = |key: &str| -> Result<&str, FieldProblem> {
            match obj.get(key) {
                None | Some(Value::Null) => Err(problem(key, "missing")),
                Some(Value::String(s)) => Ok(s),
                Some(_) => Err(problem(key, "expected a string")),
            }
        };
        let md5 = Md5Index::parse(text(KEY_MD5)?).map_err(|e| problem(KEY_MD5, e.to_string()))?;
        let sha256 = Sha256Hex::parse(text(KEY_SHA256)?).map_err(|e| problem(KEY_SHA256, e.to_string()))?;
        let processed_ts = match obj.get(KEY_PROCESSED) {
            None | Some(Value::Null) => return Err(problem(KEY_PROCESSED, "missing")),
            Some(v) => v
                .as_u64()
                .ok_or_else(|| problem(KEY_PROCESSED, "expected epoch milliseconds"))?,
        };
        let source_uri = text(KEY_SOURCE)?;
        if source_uri.trim().is_empty() {
            return Err(problem(KEY_SOURCE, "must not be empty"));
        }
        let parent_md5 = match obj.get(KEY_PARENT) {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(Md5Index::parse(s).map_err(|e| problem(KEY_PARENT, e.to_string()))?),
            Some(_) => return Err(problem(KEY_PARENT, "expected a string")),
        };
        let metadata = match obj.get(KEY_METADATA) {
            None | Some(Value::Null) => BTreeMap::new(),
            Some(Value::Object(m)) => flat_metadata(m)?,
            Some(_) => return Err(problem(KEY_METADATA, "expected an object")),
        };
        Ok(IngestMessage {
            md5,
            sha256,
            processed_ts,
            source_uri: source_uri.to_string(),
            parent_md5,
            metadata,
        })
    }

    pub fn into_record(self) -> AssetRecord {
        AssetRecord {
            md5_index: self.md5,
            sha256: self.sha256,
            source_uri: self.source_uri,
            processed_ts: self.processed_ts,
            metadata: self.metadata,
            parent_md5: self.parent_md5,
        }
    }
}

fn flat_metadata(m: &Map<String, Value>) -> Result<BTreeMap<String, String>, FieldProblem> {
    m.iter()
        .map(|(k, v)| match v {
            Value::String(s) => Ok((k.clone(), s.clone())),
            Value::Number(n) => Ok((k.clone(), n.to_string())),
            Value::Bool(b) => Ok((k.clone(), b.to_string())),
            _ => Err(problem(&format!("{KEY_METADATA}.{k}"), "values must be scalars")),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EthStatus {
    Confirmed,
    Pending,
    NotAnchored,
}

/// Verification document for one asset. Serializes to exactly the keys
/// `asset, confirmations, ethStatus, ethTxId, issueTxId, issued,
/// multiChainHash, sha256, source, validated`; `ethTxId` and `validated` are
/// omitted while no anchor covers the asset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationResponse {
    pub asset: String,
    pub confirmations: String,
    #[serde(rename = "ethStatus")]
    pub eth_status: EthStatus,
    #[serde(rename = "ethTxId", default, skip_serializing_if = "Option::is_none")]
    pub eth_tx_id: Option<String>,
    #[serde(rename = "issueTxId")]
    pub issue_tx_id: String,
    pub issued: String,
    #[serde(rename = "multiChainHash")]
    pub multi_chain_hash: String,
    pub sha256: String,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validated: Option<String>,
}

impl VerificationResponse {
    /// `anchor` is the earliest anchor at or above the asset's height, with
    /// its current status.
    pub fn build(view: &AssetView, anchor: Option<(&AnchorRecord, &AnchorStatusReport)>) -> Self {
        let issued = Utc
            .timestamp_opt(view.block_time as i64, 0)
            .single()
            .unwrap_or_default();
        let (eth_status, eth_tx_id, confirmations, validated) = match anchor {
            None => (EthStatus::NotAnchored, None, 0, None),
            Some((record, report)) => {
                let status = match report.status {
                    AnchorStatus::Confirmed => EthStatus::Confirmed,
                    AnchorStatus::Submitted | AnchorStatus::Failed => EthStatus::Pending,
                };
                (
                    status,
                    Some(format!("0x{}", record.eth_tx_hash)),
                    report.confirmations,
                    Some(rfc1123(record.anchored_at)),
                )
            }
        };
        VerificationResponse {
            asset: view.record.md5_index.to_string(),
            confirmations: confirmations.to_string(),
            eth_status,
            eth_tx_id,
            issue_tx_id: view.issue_tx_id.to_hex(),
            issued: rfc1123(issued),
            multi_chain_hash: view.block_hash.to_hex(),
            sha256: view.record.sha256.to_string(),
            source: view.record.source_uri.clone(),
            validated,
        }
    }
}

/// One step of a lineage walk, newest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageEntry {
    pub asset: String,
    pub sha256: String,
    pub source: String,
    #[serde(rename = "issueTxId")]
    pub issue_tx_id: String,
    pub height: u64,
    #[serde(rename = "parentMd5", skip_serializing_if = "Option::is_none", default)]
    pub parent_md5: Option<String>,
}

impl From<&AssetView> for LineageEntry {
    fn from(v: &AssetView) -> Self {
        LineageEntry {
            asset: v.record.md5_index.to_string(),
            sha256: v.record.sha256.to_string(),
            source: v.record.source_uri.clone(),
            issue_tx_id: v.issue_tx_id.to_hex(),
            height: v.height,
            parent_md5: v.record.parent_md5.as_ref().map(ToString::to_string),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submitted {
    pub md5: String,
    #[serde(rename = "txId")]
    pub tx_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub field: Option<String>,
}
