use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use sha2::{Digest, Sha256};

use super::backend::{BackendError, LlmBackend};
use super::{GenerationConfig, LlmError, PromptBundle};

const STRIPES: usize = 16;

/// Completed texts stored as `<sha256>.txt` under one directory.
pub struct ResponseCache {
    dir: PathBuf,
    stripes: Vec<Mutex<()>>,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ResponseCache {
            dir,
            stripes: (0..STRIPES).map(|_| Mutex::new(())).collect(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.txt"))
    }

    pub fn load(&self, key: &str) -> Result<Option<String>, LlmError> {
        match fs::read_to_string(self.path(key)) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Write through a temp file and rename, so readers never see partial text.
    pub fn store(&self, key: &str, text: &str) -> Result<(), LlmError> {
        let stripe = usize::from_str_radix(&key[..2.min(key.len())], 16).unwrap_or(0) % STRIPES;
        let _guard = self.stripes[stripe].lock().expect("cache stripe poisoned");
        let tmp = self.dir.join(format!("{key}.tmp"));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(text.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(tmp, self.path(key))?;
        Ok(())
    }
}

/// Hex SHA-256 over model id, rendered prompt and sampling settings.
pub fn cache_key(bundle: &PromptBundle, config: &GenerationConfig) -> String {
    let mut h = Sha256::new();
    for part in [
        config.model_id.as_bytes(),
        bundle.render().as_bytes(),
        &config.temperature.to_bits().to_le_bytes(),
        &config.top_p.to_bits().to_le_bytes(),
        &config.max_tokens.to_le_bytes(),
    ] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    hex::encode(h.finalize())
}

/// Waits before each retry of a retryable backend failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    pub delays: Vec<Duration>,
}

impl RetryPolicy {
    /// Retry without sleeping, `retries` times.
    pub fn immediate(retries: usize) -> Self {
        RetryPolicy {
            delays: vec![Duration::ZERO; retries],
        }
    }

    pub fn max_attempts(&self) -> usize {
        self.delays.len() + 1
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            delays: [1, 4, 16].into_iter().map(Duration::from_secs).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub cache_hit: bool,
    pub attempts: usize,
}

/// Serve from cache when possible; otherwise call the backend with retries
/// and store a non-empty answer.
pub fn complete_cached(
    backend: &dyn LlmBackend,
    bundle: &PromptBundle,
    config: &GenerationConfig,
    cache: Option<&ResponseCache>,
    retry: &RetryPolicy,
) -> Result<Completion, LlmError> {
    let key = cache_key(bundle, config);
    if let Some(cache) = cache {
        if let Some(text) = cache.load(&key)? {
            return Ok(Completion {
                text,
                cache_hit: true,
                attempts: 0,
            });
        }
    }

    let mut attempts = 0;
    let text = loop {
        attempts += 1;
        match backend.complete(bundle, config) {
            Ok(text) => break text,
            Err(e) if e.is_retryable() && attempts < retry.max_attempts() => {
                let delay = retry.delays[attempts - 1];
                if !delay.is_zero() {
                    std::thread::sleep(delay);
                }
            }
            Err(source @ BackendError::Rejected(_)) | Err(source) => {
                return Err(LlmError::Exhausted { attempts, source });
            }
        }
    };

    if text.trim().is_empty() {
        return Err(LlmError::EmptyCompletion);
    }
    if let Some(cache) = cache {
        cache.store(&key, &text)?;
    }
    Ok(Completion {
        text,
        cache_hit: false,
        attempts,
    })
}
