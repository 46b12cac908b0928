//! Gateway configuration. Precedence: flags > environment > file > defaults.

use std::path::{Path, PathBuf};

use credledger::auth::AuthConfig;
use credledger::EngineConfig;
use serde::{Deserialize, Serialize};

pub const ENV_PREFIX: &str = "CREDLEDGER_";
pub const STATE_FILE: &str = "state.json";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config file {path}: {source}")]
    Toml {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid value {value:?} for {var}")]
    Env { var: String, value: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub listen: String,
    pub block_interval_ms: u64,
    pub challenge_ttl_ms: u64,
    pub session_ttl_ms: u64,
    /// State is persisted to `<data_dir>/state.json`; in-memory only when unset.
    pub data_dir: Option<PathBuf>,
    /// Allowed browser origin for the dashboard, or `*`.
    pub cors_origin: Option<String>,
    pub domain: String,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        let auth = AuthConfig::default();
        GatewayConfig {
            listen: "127.0.0.1:8080".into(),
            block_interval_ms: 5_000,
            challenge_ttl_ms: auth.challenge_ttl_ms,
            session_ttl_ms: auth.session_ttl_ms,
            data_dir: None,
            cors_origin: None,
            domain: EngineConfig::default().domain,
        }
    }
}

/// Values given on the command line; `None` means "not given".
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub listen: Option<String>,
    pub block_interval_ms: Option<u64>,
    pub challenge_ttl_ms: Option<u64>,
    pub session_ttl_ms: Option<u64>,
    pub data_dir: Option<PathBuf>,
    pub cors_origin: Option<String>,
    pub domain: Option<String>,
}

fn number(var: &str, value: String) -> Result<u64, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::Env {
        var: var.to_string(),
        value,
    })
}

impl ConfigOverrides {
    /// Reads `CREDLEDGER_LISTEN`, `CREDLEDGER_BLOCK_INTERVAL_MS`, `CREDLEDGER_CHALLENGE_TTL_MS`,
    /// `CREDLEDGER_SESSION_TTL_MS`, `CREDLEDGER_DATA_DIR`, `CREDLEDGER_CORS_ORIGIN`, `CREDLEDGER_DOMAIN`.
    pub fn from_env(get: impl Fn(&str) -> Option<String>) -> Result<ConfigOverrides, ConfigError> {
        let var = |name: &str| {
            let key = format!("{ENV_PREFIX}{name}");
            get(&key).filter(|v| !v.is_empty()).map(|v| (key, v))
        };
        let num = |name: &str| var(name).map(|(k, v)| number(&k, v)).transpose();
        Ok(ConfigOverrides {
            listen: var("LISTEN").map(|(_, v)| v),
            block_interval_ms: num("BLOCK_INTERVAL_MS")?,
            challenge_ttl_ms: num("CHALLENGE_TTL_MS")?,
            session_ttl_ms: num("SESSION_TTL_MS")?,
            data_dir: var("DATA_DIR").map(|(_, v)| PathBuf::from(v)),
            cors_origin: var("CORS_ORIGIN").map(|(_, v)| v),
            domain: var("DOMAIN").map(|(_, v)| v),
        })
    }

    fn apply(self, c: &mut GatewayConfig) {
        if let Some(v) = self.listen {
            c.listen = v;
        }
        if let Some(v) = self.block_interval_ms {
            c.block_interval_ms = v;
        }
        if let Some(v) = self.challenge_ttl_ms {
            c.challenge_ttl_ms = v;
        }
        if let Some(v) = self.session_ttl_ms {
            c.session_ttl_ms = v;
        }
        if self.data_dir.is_some() {
            c.data_dir = self.data_dir;
        }
        if self.cors_origin.is_some() {
            c.cors_origin = self.cors_origin;
        }
        if let Some(v) = self.domain {
            c.domain = v;
        }
    }
}

impl GatewayConfig {
    pub fn from_file(path: &Path) -> Result<GatewayConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Toml {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn resolve(
        file: Option<&Path>,
        env: ConfigOverrides,
        flags: ConfigOverrides,
    ) -> Result<GatewayConfig, ConfigError> {
        let mut config = match file {
            Some(path) => Self::from_file(path)?,
            None => GatewayConfig::default(),
        };
        env.apply(&mut config);
        flags.apply(&mut config);
        Ok(config)
    }

    pub fn state_path(&self) -> Option<PathBuf> {
        self.data_dir.as_ref().map(|d| d.join(STATE_FILE))
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            domain: self.domain.clone(),
            auth: AuthConfig {
                challenge_ttl_ms: self.challenge_ttl_ms,
                session_ttl_ms: self.session_ttl_ms,
                ..AuthConfig::default()
            },
            state_path: self.state_path(),
        }
    }
}
