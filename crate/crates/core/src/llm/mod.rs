//! LLM access: generation settings, prompt construction, context-window
//! truncation, backends and a content-addressed response cache.

mod backend;
mod cache;
mod prompt;
mod truncate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{BackendError, HttpChatBackend, LlmBackend, MockBackend, RateLimiter};
pub use cache::{cache_key, complete_cached, Completion, ResponseCache, RetryPolicy};
pub use prompt::{
    build_critic_prompt, build_critic_prompt_with, build_rag_prompt, LengthControl, PromptBundle,
    RagMode, CRITIC_SYSTEM_MESSAGE, RAG_SYSTEM_MESSAGE,
};
pub use truncate::{truncate_reviews, TokenCounter, Truncation, WordCountEstimator};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("backend failed after {attempts} attempt(s): {source}")]
    Exhausted {
        attempts: usize,
        #[source]
        source: BackendError,
    },
    #[error("backend returned an empty completion")]
    EmptyCompletion,
    #[error("response cache I/O failed: {0}")]
    Cache(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub model_id: String,
    pub context_limit_tokens: u64,
}

impl GenerationConfig {
    /// Reranker/abstractor settings.
    pub fn rag(model_id: impl Into<String>, context_limit_tokens: u64) -> Self {
        GenerationConfig {
            temperature: 0.7,
            top_p: 0.9,
            max_tokens: 256,
            model_id: model_id.into(),
            context_limit_tokens,
        }
    }

    /// Long-form critic settings: provider defaults for sampling, 512 output tokens.
    pub fn critic(model_id: impl Into<String>, context_limit_tokens: u64) -> Self {
        GenerationConfig {
            temperature: 1.0,
            top_p: 1.0,
            max_tokens: 512,
            model_id: model_id.into(),
            context_limit_tokens,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::Precondition("temperature must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.top_p) || self.top_p == 0.0 {
            return Err(LlmError::Precondition("top_p must be in (0, 1]".into()));
        }
        if self.max_tokens == 0 || self.context_limit_tokens == 0 {
            return Err(LlmError::Precondition("token limits must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_settings() {
        let rag = GenerationConfig::rag("m", 8000);
        assert_eq!((rag.temperature, rag.top_p, rag.max_tokens), (0.7, 0.9, 256));
        assert_eq!(GenerationConfig::critic("m", 8000).max_tokens, 512);
        assert!(rag.validate().is_ok());
    }

    #[test]
    fn invalid_settings_rejected() {
        let mut c = GenerationConfig::rag("m", 8000);
        c.top_p = 0.0;
        assert!(c.validate().is_err());
        c.top_p = 0.9;
        c.temperature = -0.1;
        assert!(c.validate().is_err());
    }
}
