//! Ethereum JSON-RPC: a blocking client implementing
//! [`PublicChainBackend`], and a server exposing a [`MockChain`] over the
//! same methods.

use std::sync::Arc;
use std::time::Duration;

use anchorledger::anchor::eth::UnsignedTransaction;
use anchorledger::anchor::{BackendError, MockChain, PublicChainBackend, Receipt};
use anchorledger::{Address, Hash32};
use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

fn quantity(v: u128) -> String {
    format!("{v:#x}")
}

fn parse_quantity(v: &Value) -> Result<u128, String> {
    let s = v.as_str().ok_or_else(|| format!("expected hex quantity, got {v}"))?;
    let body = s.strip_prefix("0x").ok_or_else(|| format!("missing 0x prefix: {s}"))?;
    if body.is_empty() {
        return Err("empty quantity".into());
    }
    u128::from_str_radix(body, 16).map_err(|e| format!("bad quantity {s}: {e}"))
}

fn parse_data(v: &Value) -> Result<Vec<u8>, String> {
    let s = v.as_str().ok_or_else(|| format!("expected hex data, got {v}"))?;
    let body = s.strip_prefix("0x").ok_or_else(|| format!("missing 0x prefix: {s}"))?;
    hex::decode(body).map_err(|e| format!("bad hex data: {e}"))
}

fn parse_hash(v: &Value) -> Result<Hash32, String> {
    let bytes = parse_data(v)?;
    let arr: [u8; 32] = bytes.try_into().map_err(|_| "hash must be 32 bytes".to_string())?;
    Ok(Hash32(arr))
}

fn prefixed(hash: &Hash32) -> String {
    format!("0x{hash}")
}

fn call_object(from: &Address, tx: &UnsignedTransaction) -> Value {
    json!({
        "from": from.to_string(),
        "to": tx.to.to_string(),
        "gasPrice": quantity(tx.gas_price),
        "value": quantity(tx.value),
        "data": format!("0x{}", hex::encode(&tx.data)),
    })
}

/// JSON-RPC client for one endpoint. Transport failures and HTTP errors map
/// to [`BackendError::Connection`]; JSON-RPC errors map to
/// [`BackendError::Rejected`].
#[derive(Debug)]
pub struct HttpRpcBackend {
    id: String,
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpRpcBackend {
    pub fn new(id: impl Into<String>, url: impl Into<String>, timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .connect_timeout(timeout)
            .build()
            .map_err(|e| BackendError::Connection(e.to_string()))?;
        Ok(HttpRpcBackend {
            id: id.into(),
            url: url.into(),
            client,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn call(&self, method: &str, params: Value) -> Result<Value, BackendError> {
        let body = json!({"jsonrpc": "2.0", "id": 1, "method": method, "params": params});
        let resp = self
            .client
            .post(&self.url)
            .json(&body)
            .send()
            .map_err(|e| BackendError::Connection(format!("{}: {e}", self.url)))?;
        if !resp.status().is_success() {
            return Err(BackendError::Connection(format!("{}: HTTP {}", self.url, resp.status())));
        }
        let mut reply: Value = resp
            .json()
            .map_err(|e| BackendError::Connection(format!("{}: unreadable reply: {e}", self.url)))?;
        if let Some(err) = reply.get("error").filter(|e| !e.is_null()) {
            let msg = err.get("message").and_then(Value::as_str).unwrap_or("unknown error");
            return Err(BackendError::Rejected(msg.to_string()));
        }
        Ok(reply.get_mut("result").map(Value::take).unwrap_or(Value::Null))
    }

    fn malformed(&self, method: &str, detail: String) -> BackendError {
        BackendError::Connection(format!("{}: malformed {method} result: {detail}", self.url))
    }

    fn call_quantity(&self, method: &str, params: Value) -> Result<u128, BackendError> {
        let v = self.call(method, params)?;
        parse_quantity(&v).map_err(|e| self.malformed(method, e))
    }
}

impl PublicChainBackend for HttpRpcBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn get_nonce(&self, address: &Address) -> Result<u64, BackendError> {
        let n = self.call_quantity("eth_getTransactionCount", json!([address.to_string(), "pending"]))?;
        u64::try_from(n).map_err(|_| self.malformed("eth_getTransactionCount", "overflow".into()))
    }

    fn get_balance(&self, address: &Address) -> Result<u128, BackendError> {
        self.call_quantity("eth_getBalance", json!([address.to_string(), "latest"]))
    }

    fn estimate_gas(&self, from: &Address, tx: &UnsignedTransaction) -> Result<u64, BackendError> {
        let n = self.call_quantity("eth_estimateGas", json!([call_object(from, tx)]))?;
        u64::try_from(n).map_err(|_| self.malformed("eth_estimateGas", "overflow".into()))
    }

    fn gas_price(&self) -> Result<u128, BackendError> {
        self.call_quantity("eth_gasPrice", json!([]))
    }

    fn send_raw_transaction(&self, raw: &[u8]) -> Result<Hash32, BackendError> {
        let v = self.call("eth_sendRawTransaction", json!([format!("0x{}", hex::encode(raw))]))?;
        parse_hash(&v).map_err(|e| self.malformed("eth_sendRawTransaction", e))
    }

    fn get_receipt(&self, tx_hash: &Hash32) -> Result<Option<Receipt>, BackendError> {
        let v = self.call("eth_getTransactionReceipt", json!([prefixed(tx_hash)]))?;
        if v.is_null() {
            return Ok(None);
        }
        let field = |name: &str| {
            v.get(name)
                .ok_or_else(|| format!("missing {name}"))
                .and_then(parse_quantity)
        };
        let parsed = (|| {
            Ok::<_, String>(Receipt {
                block_height: field("blockNumber")? as u64,
                success: field("status")? == 1,
                gas_used: field("gasUsed")? as u64,
            })
        })();
        parsed.map(Some).map_err(|e| self.malformed("eth_getTransactionReceipt", e))
    }

    fn get_raw_transaction(&self, tx_hash: &Hash32) -> Result<Option<Vec<u8>>, BackendError> {
        let v = self.call("eth_getRawTransactionByHash", json!([prefixed(tx_hash)]))?;
        if v.is_null() {
            return Ok(None);
        }
        parse_data(&v)
            .map(Some)
            .map_err(|e| self.malformed("eth_getRawTransactionByHash", e))
    }

    fn head_height(&self) -> Result<u64, BackendError> {
        let n = self.call_quantity("eth_blockNumber", json!([]))?;
        u64::try_from(n).map_err(|_| self.malformed("eth_blockNumber", "overflow".into()))
    }
}

// ---- mock server ----------------------------------------------------------

fn rpc_error(id: Value, code: i64, message: impl Into<String>) -> Value {
    json!({"jsonrpc": "2.0", "id": id, "error": {"code": code, "message": message.into()}})
}

fn param(params: &Value, i: usize) -> Result<&Value, String> {
    params.get(i).ok_or_else(|| format!("missing parameter {i}"))
}

fn param_address(params: &Value, i: usize) -> Result<Address, String> {
    param(params, i)?
        .as_str()
        .ok_or_else(|| "address must be a string".to_string())?
        .parse()
        .map_err(|e| format!("{e}"))
}

fn dispatch(chain: &MockChain, method: &str, params: &Value) -> Result<Result<Value, String>, BackendError> {
    let bad = |e: String| Ok(Err(e));
    Ok(Ok(match method {
        "eth_blockNumber" => json!(quantity(chain.head_height()? as u128)),
        "eth_gasPrice" => json!(quantity(chain.gas_price()?)),
        "eth_getBalance" => match param_address(params, 0) {
            Ok(a) => json!(quantity(chain.get_balance(&a)?)),
            Err(e) => return bad(e),
        },
        "eth_getTransactionCount" => match param_address(params, 0) {
            Ok(a) => json!(quantity(chain.get_nonce(&a)? as u128)),
            Err(e) => return bad(e),
        },
        "eth_estimateGas" => {
            let call = match param(params, 0) {
                Ok(c) => c,
                Err(e) => return bad(e),
            };
            let data = match call.get("data").map(parse_data).transpose() {
                Ok(d) => d.unwrap_or_default(),
                Err(e) => return bad(e),
            };
            let tx = UnsignedTransaction {
                nonce: 0,
                gas_price: 0,
                gas_limit: 0,
                to: Address([0; 20]),
                value: 0,
                data,
            };
            json!(quantity(chain.estimate_gas(&Address([0; 20]), &tx)? as u128))
        }
        "eth_sendRawTransaction" => match param(params, 0).and_then(parse_data) {
            Ok(raw) => json!(prefixed(&chain.send_raw_transaction(&raw)?)),
            Err(e) => return bad(e),
        },
        "eth_getTransactionReceipt" => match param(params, 0).and_then(parse_hash) {
            Ok(h) => match chain.get_receipt(&h)? {
                Some(r) => json!({
                    "transactionHash": prefixed(&h),
                    "blockNumber": quantity(r.block_height as u128),
                    "status": quantity(r.success as u128),
                    "gasUsed": quantity(r.gas_used as u128),
                }),
                None => Value::Null,
            },
            Err(e) => return bad(e),
        },
        "eth_getRawTransactionByHash" => match param(params, 0).and_then(parse_hash) {
            Ok(h) => match chain.get_raw_transaction(&h)? {
                Some(raw) => json!(format!("0x{}", hex::encode(raw))),
                None => Value::Null,
            },
            Err(e) => return bad(e),
        },
        // ganache-style manual mining
        "evm_mine" => json!(quantity(chain.step() as u128)),
        other => return bad(format!("method not found: {other}")),
    }))
}

async fn handle_rpc(State(chain): State<Arc<MockChain>>, Json(req): Json<Value>) -> (StatusCode, Json<Value>) {
    let id = req.get("id").cloned().unwrap_or(Value::Null);
    let Some(method) = req.get("method").and_then(Value::as_str).map(str::to_string) else {
        return (StatusCode::OK, Json(rpc_error(id, -32600, "invalid request")));
    };
    let params = req.get("params").cloned().unwrap_or_else(|| json!([]));
    let result = tokio::task::spawn_blocking(move || dispatch(&chain, &method, &params))
        .await
        .expect("rpc dispatch panicked");
    match result {
        Ok(Ok(value)) => (StatusCode::OK, Json(json!({"jsonrpc": "2.0", "id": id, "result": value}))),
        Ok(Err(invalid)) => (StatusCode::OK, Json(rpc_error(id, -32602, invalid))),
        Err(BackendError::Rejected(msg)) => (StatusCode::OK, Json(rpc_error(id, -32000, msg))),
        // a mock switched off answers like an unavailable gateway
        Err(BackendError::Connection(msg)) => (StatusCode::SERVICE_UNAVAILABLE, Json(rpc_error(id, -32603, msg))),
    }
}

/// JSON-RPC router over a [`MockChain`], mounted at `/`.
pub fn mock_rpc_router(chain: Arc<MockChain>) -> Router {
    Router::new().route("/", post(handle_rpc)).with_state(chain)
}
