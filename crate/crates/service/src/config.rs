//! TOML configuration for the node daemon.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anchorledger::anchor::{AnchorConfig, ScheduleConfig};
use ipnet::IpNet;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub node: NodeSection,
    #[serde(default)]
    pub api: ApiConfig,
    #[serde(default)]
    pub anchor: AnchorConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub backends: Vec<BackendConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSection {
    /// Environment variable holding this node's hex secret key.
    #[serde(default = "default_node_key_env")]
    pub key_env: String,
    /// Encoded genesis block written by `anchorledger init`.
    pub genesis: PathBuf,
    #[serde(default = "default_difficulty")]
    pub difficulty: u32,
    pub p2p_listen: String,
    #[serde(default)]
    pub peers: Vec<String>,
    /// Seconds between mining rounds. Rounds with an empty pool are skipped.
    #[serde(default = "default_block_interval")]
    pub block_interval_secs: u64,
    #[serde(default = "default_sync_interval")]
    pub sync_interval_secs: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApiConfig {
    pub listen: SocketAddr,
    /// Networks allowed to submit assets. Empty means nobody may.
    pub allowlist: Vec<IpNet>,
    pub default_per_page: usize,
    pub max_per_page: usize,
    /// Shared secret for `POST /anchors/trigger`; unset disables the route.
    pub admin_secret_env: Option<String>,
}

impl Default for ApiConfig {
    fn default() -> Self {
        ApiConfig {
            listen: "127.0.0.1:8080".parse().unwrap(),
            allowlist: vec!["127.0.0.1/32".parse().unwrap(), "::1/128".parse().unwrap()],
            default_per_page: 20,
            max_per_page: 200,
            admin_secret_env: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub id: String,
    pub url: String,
    #[serde(default = "default_rpc_timeout")]
    pub timeout_ms: u64,
}

impl BackendConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

fn default_node_key_env() -> String {
    "ANCHORLEDGER_NODE_KEY".into()
}

fn default_difficulty() -> u32 {
    4
}

fn default_block_interval() -> u64 {
    15
}

fn default_sync_interval() -> u64 {
    30
}

fn default_rpc_timeout() -> u64 {
    5_000
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ServiceConfig = toml::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), ConfigError> {
        if self.api.default_per_page == 0 || self.api.default_per_page > self.api.max_per_page {
            return Err(ConfigError::Invalid(
                "api.default_per_page must be between 1 and api.max_per_page".into(),
            ));
        }
        let mut ids: Vec<&str> = self.backends.iter().map(|b| b.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(ConfigError::Invalid("backend ids must be unique".into()));
        }
        if self.anchor.confirm_depth == 0 {
            return Err(ConfigError::Invalid("anchor.confirm_depth must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
data_dir = "/var/lib/anchorledger"

[node]
genesis = "genesis.bin"
p2p_listen = "0.0.0.0:7000"
peers = ["10.0.0.2:7000"]

[api]
listen = "0.0.0.0:8080"
allowlist = ["10.0.0.0/8"]
admin_secret_env = "ANCHORLEDGER_ADMIN_SECRET"

[anchor]
confirm_depth = 6
usd_per_eth = 2500.0

[schedule]
enabled = true
fire_time = "03:30"

[[backends]]
id = "primary"
url = "http://127.0.0.1:8545"

[[backends]]
id = "fallback"
url = "http://127.0.0.1:8546"
timeout_ms = 1500
"#;

    #[test]
    fn sample_parses_with_defaults() {
        let cfg = ServiceConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.node.difficulty, 4);
        assert_eq!(cfg.node.key_env, "ANCHORLEDGER_NODE_KEY");
        assert_eq!(cfg.api.allowlist.len(), 1);
        assert_eq!(cfg.api.max_per_page, 200);
        assert_eq!(cfg.anchor.gas_margin_percent, 20);
        assert_eq!(cfg.schedule.fire_time.to_string(), "03:30:00");
        assert_eq!(cfg.backends[1].timeout(), Duration::from_millis(1500));
    }

    #[test]
    fn duplicate_backends_and_unknown_keys_are_refused() {
        let dup = SAMPLE.replace("id = \"fallback\"", "id = \"primary\"");
        assert!(matches!(ServiceConfig::parse(&dup), Err(ConfigError::Invalid(_))));
        let typo = SAMPLE.replace("peers =", "peer =");
        assert!(matches!(ServiceConfig::parse(&typo), Err(ConfigError::Parse(_))));
    }
}
