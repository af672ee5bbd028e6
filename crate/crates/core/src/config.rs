//! TOML configuration: named chat backends, the model-serving sidecar, the
//! response cache and run defaults.
//!
//! ```toml
//! [backend.openai]
//! base_url = "https://api.openai.com/v1"
//! model = "gpt-4o-mini"
//! api_key_env = "OPENAI_API_KEY"
//! structured_output = true
//! context_limit_tokens = 128000
//!
//! [modelserve]
//! base_url = "http://127.0.0.1:8765"
//!
//! [cache]
//! dir = ".opinsum-cache"
//!
//! [run]
//! workers = 4
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{BackendError, HttpChatBackend};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("no backend named {0:?} in config")]
    UnknownBackend(String),
    #[error("no [modelserve] section in config")]
    NoModelserve,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the API key; no key is sent when unset.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub structured_output: bool,
    #[serde(default = "default_context_limit")]
    pub context_limit_tokens: u64,
    /// 0 disables client-side rate limiting.
    #[serde(default)]
    pub requests_per_minute: u32,
    #[serde(default = "default_backend_timeout")]
    pub timeout_secs: u64,
}

fn default_context_limit() -> u64 {
    128_000
}

fn default_backend_timeout() -> u64 {
    120
}

fn default_sidecar_timeout() -> u64 {
    30
}

fn default_cache_dir() -> PathBuf {
    PathBuf::from(".opinsum-cache")
}

fn default_true() -> bool {
    true
}

fn default_workers() -> usize {
    4
}

impl BackendConfig {
    pub fn connect(&self, name: &str) -> Result<HttpChatBackend, ConfigError> {
        let api_key = self
            .api_key_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok())
            .filter(|k| !k.is_empty());
        Ok(HttpChatBackend::new(
            name,
            &self.base_url,
            api_key,
            self.structured_output,
            self.requests_per_minute,
            Duration::from_secs(self.timeout_secs),
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelserveConfig {
    pub base_url: String,
    #[serde(default = "default_sidecar_timeout")]
    pub timeout_secs: u64,
}

impl ModelserveConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheConfig {
    #[serde(default = "default_cache_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_true")]
    pub enabled: bool,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            dir: default_cache_dir(),
            enabled: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDefaults {
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl Default for RunDefaults {
    fn default() -> Self {
        RunDefaults {
            workers: default_workers(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub backend: BTreeMap<String, BackendConfig>,
    #[serde(default)]
    pub modelserve: Option<ModelserveConfig>,
    #[serde(default)]
    pub cache: CacheConfig,
    #[serde(default)]
    pub run: RunDefaults,
}

impl Config {
    pub fn parse(contents: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(contents)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let contents = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&contents)
    }

    pub fn backend(&self, name: &str) -> Result<&BackendConfig, ConfigError> {
        self.backend
            .get(name)
            .ok_or_else(|| ConfigError::UnknownBackend(name.to_string()))
    }

    pub fn modelserve(&self) -> Result<&ModelserveConfig, ConfigError> {
        self.modelserve.as_ref().ok_or(ConfigError::NoModelserve)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_config() {
        let c = Config::parse(
            r#"
[backend.local]
base_url = "http://localhost:8000/v1"
model = "llama"
structured_output = true

[modelserve]
base_url = "http://127.0.0.1:8765"

[cache]
dir = "/tmp/c"

[run]
workers = 2
"#,
        )
        .unwrap();
        let b = c.backend("local").unwrap();
        assert_eq!(b.model, "llama");
        assert_eq!(b.context_limit_tokens, 128_000);
        assert!(b.structured_output);
        assert_eq!(c.modelserve().unwrap().timeout(), Duration::from_secs(30));
        assert_eq!(c.cache.dir, PathBuf::from("/tmp/c"));
        assert!(c.cache.enabled);
        assert_eq!(c.run.workers, 2);
        assert!(b.connect("local").is_ok());
    }

    #[test]
    fn empty_config_has_defaults() {
        let c = Config::parse("").unwrap();
        assert!(c.backend.is_empty());
        assert!(matches!(c.modelserve(), Err(ConfigError::NoModelserve)));
        assert!(matches!(c.backend("x"), Err(ConfigError::UnknownBackend(_))));
        assert_eq!(c.run.workers, 4);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(Config::parse("[run]\nthreads = 3\n").is_err());
    }
}
