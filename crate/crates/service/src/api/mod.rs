//! HTTP API over a running node.
//!
//! | route | purpose |
//! |---|---|
//! | `POST /assets` | submit an asset (allowlisted sources only) |
//! | `GET /assets/{md5}` | verification document |
//! | `GET /assets/{md5}/lineage` | parent chain of an asset |
//! | `GET /status` | chain, wallet and public-chain status |
//! | `GET /anchors?page=&per_page=` | anchor history, newest first |
//! | `GET /explorer/{selector}` | block or transaction by hash, height, id or `latest` |
//! | `POST /anchors/trigger` | manual anchor (admin secret header) |
//!
//! Handlers never block the runtime: ledger and backend calls run on the
//! blocking pool against a chain snapshot.

pub mod dto;
mod explorer;

use std::collections::HashMap;
use std::net::{IpAddr, SocketAddr};
use std::sync::{Arc, Mutex};

use anchorledger::anchor::{AnchorError, AnchorRecord, Anchorer, BackendError, ScheduleConfig};
use anchorledger::ledger::{LedgerError, Md5Index, TxError};
use anchorledger::network::Node;
use axum::body::Bytes;
use axum::extract::{ConnectInfo, MatchedPath, Path, Query, Request, State};
use axum::http::{HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ipnet::IpNet;
use serde::Serialize;
use serde_json::{json, Value};

use dto::{ErrorBody, IngestMessage, LineageEntry, Submitted, VerificationResponse};

pub use explorer::{lookup, Selector};

/// Header carrying the shared secret for `POST /anchors/trigger`.
pub const ADMIN_SECRET_HEADER: &str = "x-admin-secret";

#[derive(Debug, Clone)]
pub struct ApiSettings {
    pub allowlist: Vec<IpNet>,
    pub default_per_page: usize,
    pub max_per_page: usize,
    pub admin_secret: Option<String>,
    pub schedule: ScheduleConfig,
}

impl Default for ApiSettings {
    fn default() -> Self {
        ApiSettings {
            allowlist: Vec::new(),
            default_per_page: 20,
            max_per_page: 200,
            admin_secret: None,
            schedule: ScheduleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default)]
struct PublicCache {
    head_height: Option<u64>,
    balance_wei: Option<u128>,
}

#[derive(Clone)]
pub struct AppState {
    node: Arc<Node>,
    anchorer: Arc<Anchorer>,
    settings: Arc<ApiSettings>,
    cache: Arc<Mutex<PublicCache>>,
}

impl AppState {
    pub fn new(node: Arc<Node>, anchorer: Arc<Anchorer>, settings: ApiSettings) -> Self {
        AppState {
            node,
            anchorer,
            settings: Arc::new(settings),
            cache: Arc::new(Mutex::new(PublicCache::default())),
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/assets", post(submit_asset))
        .route("/assets/{md5}", get(verify_asset))
        .route("/assets/{md5}/lineage", get(asset_lineage))
        .route("/status", get(chain_status))
        .route("/anchors", get(anchor_history))
        .route("/anchors/trigger", post(trigger_anchor))
        .route("/explorer/{selector}", get(explorer_lookup))
        .layer(middleware::from_fn(request_log))
        .with_state(state)
}

/// True when `ip` falls inside one of the allowlisted networks. IPv4-mapped
/// IPv6 peers are compared as IPv4.
pub fn is_allowed(allowlist: &[IpNet], ip: IpAddr) -> bool {
    let ip = match ip {
        IpAddr::V6(v6) => v6.to_ipv4_mapped().map(IpAddr::V4).unwrap_or(IpAddr::V6(v6)),
        v4 => v4,
    };
    allowlist.iter().any(|net| net.contains(&ip))
}

async fn request_log(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let route = req
        .extensions()
        .get::<MatchedPath>()
        .map(|p| p.as_str().to_string())
        .unwrap_or_else(|| req.uri().path().to_string());
    let source = req
        .extensions()
        .get::<ConnectInfo<SocketAddr>>()
        .map(|c| c.0.ip().to_string())
        .unwrap_or_else(|| "-".into());
    let resp = next.run(req).await;
    tracing::info!(
        target: "anchorledger::request",
        time = %chrono::Utc::now().to_rfc3339(),
        %method,
        route,
        source,
        outcome = resp.status().as_u16(),
    );
    resp
}

// ---- errors ---------------------------------------------------------------

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error: error.into(),
                field: None,
            },
        }
    }

    fn field(status: StatusCode, field: &str, error: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error: error.into(),
                field: Some(field.to_string()),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<AnchorError> for ApiError {
    fn from(e: AnchorError) -> Self {
        let status = match &e {
            AnchorError::UnknownBackend(_) | AnchorError::InvalidBlockhash(_) => StatusCode::BAD_REQUEST,
            AnchorError::InsufficientFunds { .. } => StatusCode::PAYMENT_REQUIRED,
            AnchorError::Ledger(_) => StatusCode::CONFLICT,
            AnchorError::Backend {
                error: BackendError::Connection(_),
                ..
            } => StatusCode::BAD_GATEWAY,
            AnchorError::Backend { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            AnchorError::NoBackend => StatusCode::SERVICE_UNAVAILABLE,
            AnchorError::Log(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")))
}

fn parse_md5(raw: &str) -> Result<Md5Index, ApiError> {
    Md5Index::parse(raw).map_err(|e| ApiError::field(StatusCode::BAD_REQUEST, "md5", e.to_string()))
}

// ---- handlers -------------------------------------------------------------

async fn submit_asset(
    State(state): State<AppState>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    body: Bytes,
) -> Result<(StatusCode, Json<Submitted>), ApiError> {
    if !is_allowed(&state.settings.allowlist, peer.ip()) {
        return Err(ApiError::new(
            StatusCode::FORBIDDEN,
            format!("{} is not allowed to submit assets", peer.ip()),
        ));
    }
    let value: Value = serde_json::from_slice(&body)
        .map_err(|e| ApiError::field(StatusCode::BAD_REQUEST, "body", format!("invalid JSON: {e}")))?;
    let msg = IngestMessage::from_json(&value)
        .map_err(|p| ApiError::field(StatusCode::BAD_REQUEST, &p.field, p.reason))?;
    let md5 = msg.md5.clone();
    let node = state.node.clone();
    let result = blocking(move || node.submit_asset(msg.into_record())).await?;
    match result {
        Ok((tx, report)) => {
            tracing::debug!(%md5, peers = report.deliveries.len(), failed = report.failures(), "asset broadcast");
            Ok((
                StatusCode::CREATED,
                Json(Submitted {
                    md5: md5.to_string(),
                    tx_id: tx.tx_id().to_hex(),
                }),
            ))
        }
        Err(LedgerError::Tx(TxError::DuplicateAsset(m))) => {
            Err(ApiError::field(StatusCode::CONFLICT, dto::KEY_MD5, format!("asset {m} already submitted")))
        }
        Err(LedgerError::Tx(TxError::UnknownParent(p))) => Err(ApiError::field(
            StatusCode::BAD_REQUEST,
            dto::KEY_PARENT,
            format!("parent asset {p} is not on chain"),
        )),
        Err(LedgerError::Tx(TxError::PermissionDenied { .. })) => Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "this node lacks send permission",
        )),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
    }
}

/// Verification document for `md5`, or `None` when the asset is unknown.
/// May call the anchor's backend.
pub fn verification(node: &Node, anchorer: &Anchorer, md5: &Md5Index) -> Option<VerificationResponse> {
    let snapshot = node.snapshot();
    let view = snapshot.query_asset(md5)?;
    let anchor = anchorer
        .covering(view.height)
        .and_then(|record| anchorer.status(record.id).map(|report| (record, report)));
    Some(VerificationResponse::build(view, anchor.as_ref().map(|(r, s)| (r, s))))
}

async fn verify_asset(
    State(state): State<AppState>,
    Path(raw): Path<String>,
) -> Result<Json<VerificationResponse>, ApiError> {
    let md5 = parse_md5(&raw)?;
    let s = state.clone();
    let key = md5.clone();
    blocking(move || verification(&s.node, &s.anchorer, &key))
        .await?
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no asset with md5 {md5}")))
}

async fn asset_lineage(
    State(state): State<AppState>,
    Path(raw): Path<String>,
) -> Result<Json<Vec<LineageEntry>>, ApiError> {
    let md5 = parse_md5(&raw)?;
    let snapshot = state.node.snapshot();
    let chain: Vec<LineageEntry> = snapshot.lineage(&md5).into_iter().map(LineageEntry::from).collect();
    if chain.is_empty() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("no asset with md5 {md5}")));
    }
    Ok(Json(chain))
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct AnchorSummary {
    #[serde(flatten)]
    record: AnchorRecord,
    explorer_url: String,
}

fn summary(anchorer: &Anchorer, record: AnchorRecord) -> AnchorSummary {
    AnchorSummary {
        explorer_url: anchorer.config().explorer_link(&record.eth_tx_hash),
        record,
    }
}

/// The status document served at `GET /status`.
pub fn status_document(state: &AppState) -> Value {
    let node = &state.node;
    let anchorer = &state.anchorer;
    let chain = node.snapshot();
    let tip = chain.tip();
    let peers: Vec<Value> = node
        .sessions()
        .into_iter()
        .filter(|s| s.state == anchorledger::network::SessionState::Active)
        .map(|s| json!({"id": s.peer_id.to_string(), "address": s.remote_address}))
        .collect();

    let backend = anchorer.backend_ids().into_iter().next();
    let backend_ref = backend.as_deref().and_then(|id| anchorer.backend(id));
    let head = backend_ref.map(|b| b.head_height());
    let balance = backend_ref.map(|b| b.get_balance(&anchorer.wallet_address()));
    let mut cache = state.cache.lock().unwrap();
    let head_stale = !matches!(head, Some(Ok(_)));
    let balance_stale = !matches!(balance, Some(Ok(_)));
    if let Some(Ok(h)) = head {
        cache.head_height = Some(h);
    }
    if let Some(Ok(b)) = balance {
        cache.balance_wei = Some(b);
    }
    let cached = cache.clone();
    drop(cache);

    let usd = anchorer.config().usd_per_eth;
    let last = anchorer.last_anchor();
    let synced = match (&last, chain.latest_confirmed_blockhash(anchorer.config().confirm_depth)) {
        (Some(rec), Ok((hash, _))) => {
            rec.private_blockhash == hash
                && anchorer.status(rec.id).is_some_and(|r| r.status == anchorledger::anchor::AnchorStatus::Confirmed)
        }
        _ => false,
    };
    let cost = match anchorer.preview(&chain, None) {
        Ok(p) => json!({
            "privateHeight": p.private_height,
            "gasLimit": p.gas_limit,
            "gasPriceWei": p.gas_price_wei.to_string(),
            "costWei": p.cost_wei.to_string(),
            "costUsd": p.cost_usd,
            "sufficient": p.sufficient,
        }),
        Err(e) => json!({"error": e.to_string()}),
    };
    json!({
        "chain": {
            "height": chain.tip_height(),
            "tipHash": chain.tip_hash().to_hex(),
            "tipTime": dto::rfc1123(chrono::DateTime::from_timestamp(tip.header.timestamp as i64, 0).unwrap_or_default()),
            "genesisHash": chain.genesis_hash().to_hex(),
            "assets": chain.asset_count(),
            "pending": node.pending().len(),
        },
        "node": node.id().to_string(),
        "peerCount": peers.len(),
        "peers": peers,
        "publicChain": {
            "backend": backend,
            "backends": anchorer.backend_ids(),
            "headHeight": cached.head_height,
            "synced": synced,
            "stale": head_stale,
        },
        "wallet": {
            "address": anchorer.wallet_address().to_string(),
            "balanceWei": cached.balance_wei.map(|b| b.to_string()),
            "balanceEth": cached.balance_wei.map(|b| b as f64 / 1e18),
            "balanceUsd": cached.balance_wei.map(|b| anchorledger::anchor::wei_to_usd(b, usd)),
            "usdPerEth": usd,
            "stale": balance_stale,
        },
        "anchorCost": cost,
        "lastAnchor": last.map(|r| summary(anchorer, r)),
        "schedule": {
            "enabled": state.settings.schedule.enabled,
            "fireTime": state.settings.schedule.fire_time.format("%H:%M:%S").to_string(),
        },
    })
}

async fn chain_status(State(state): State<AppState>) -> Result<Json<Value>, ApiError> {
    blocking(move || status_document(&state)).await.map(Json)
}

fn paging(q: &HashMap<String, String>, settings: &ApiSettings) -> Result<(usize, usize), ApiError> {
    let num = |key: &str, default: usize| -> Result<usize, ApiError> {
        match q.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<usize>()
                .map_err(|_| ApiError::field(StatusCode::BAD_REQUEST, key, "expected a positive integer")),
        }
    };
    let page = num("page", 1)?;
    let per_page = num("per_page", settings.default_per_page)?;
    if page == 0 {
        return Err(ApiError::field(StatusCode::BAD_REQUEST, "page", "pages start at 1"));
    }
    if per_page == 0 || per_page > settings.max_per_page {
        return Err(ApiError::field(
            StatusCode::BAD_REQUEST,
            "per_page",
            format!("must be between 1 and {}", settings.max_per_page),
        ));
    }
    Ok((page, per_page))
}

async fn anchor_history(
    State(state): State<AppState>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Json<Value>, ApiError> {
    let (page, per_page) = paging(&q, &state.settings)?;
    let (records, total) = state.anchorer.page(page, per_page);
    let records: Vec<AnchorSummary> = records.into_iter().map(|r| summary(&state.anchorer, r)).collect();
    Ok(Json(json!({
        "page": page,
        "perPage": per_page,
        "total": total,
        "records": records,
    })))
}

async fn explorer_lookup(
    State(state): State<AppState>,
    Path(raw): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let selector = Selector::parse(&raw)
        .ok_or_else(|| ApiError::field(StatusCode::BAD_REQUEST, "selector", "expected latest, a height or a 64-hex hash"))?;
    lookup(&state.node.snapshot(), &selector)
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("nothing matches {raw}")))
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

async fn trigger_anchor(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let Some(secret) = state.settings.admin_secret.as_deref() else {
        return Err(ApiError::new(StatusCode::FORBIDDEN, "manual anchoring is not enabled"));
    };
    let offered = headers.get(ADMIN_SECRET_HEADER).map(|v| v.as_bytes()).unwrap_or_default();
    if !constant_time_eq(offered, secret.as_bytes()) {
        return Err(ApiError::new(StatusCode::UNAUTHORIZED, "missing or wrong admin secret"));
    }
    let selection = if body.is_empty() {
        None
    } else {
        let v: Value = serde_json::from_slice(&body)
            .map_err(|e| ApiError::field(StatusCode::BAD_REQUEST, "body", format!("invalid JSON: {e}")))?;
        match v.get("backend") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => return Err(ApiError::field(StatusCode::BAD_REQUEST, "backend", "expected a string")),
        }
    };
    let s = state.clone();
    let record = blocking(move || {
        let chain = s.node.snapshot();
        s.anchorer.submit_anchor(&chain, selection.as_deref(), s.node.now())
    })
    .await??;
    Ok((StatusCode::CREATED, Json(json!(summary(&state.anchorer, record)))))
}
