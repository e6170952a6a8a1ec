//! LLM querying for node descriptions, with an on-disk response cache and a
//! deterministic offline backend.

mod cache;
mod mock;
mod remote;
mod synth;

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

pub use cache::ResponseCache;
pub use mock::query_mock;
pub use remote::{query_remote, RemoteConfig};
pub use synth::{read_records, synthesize_node_texts, write_records, SynthOptions, TextRecord};

use crate::error::{Error, Result};
use crate::http::RateLimiter;

pub const DEFAULT_MODEL: &str = "gpt-4o-mini";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub model: String,
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl LlmRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        LlmRequest {
            model: DEFAULT_MODEL.into(),
            prompt: prompt.into(),
            max_tokens: 512,
            temperature: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.prompt.trim().is_empty() {
            return Err(Error::InvalidArgument("empty prompt".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::InvalidArgument(format!("temperature {} < 0", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseSource {
    Remote,
    Mock,
    Cache,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    pub token_usage: TokenUsage,
    pub backend: ResponseSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Backend {
    Mock,
    Remote(RemoteConfig),
}

/// A backend plus optional cache. Counts how many requests actually went
/// over the network.
#[derive(Debug)]
pub struct LlmClient {
    pub backend: Backend,
    pub cache: Option<ResponseCache>,
    limiter: RateLimiter,
    remote_calls: AtomicUsize,
}

impl LlmClient {
    pub fn new(backend: Backend, cache: Option<ResponseCache>) -> Self {
        let rpm = match &backend {
            Backend::Remote(cfg) => cfg.requests_per_minute,
            Backend::Mock => 0,
        };
        LlmClient {
            backend,
            cache,
            limiter: RateLimiter::new(rpm),
            remote_calls: AtomicUsize::new(0),
        }
    }

    pub fn remote_calls(&self) -> usize {
        self.remote_calls.load(Ordering::Relaxed)
    }

    /// Answers from the cache when possible, otherwise from the backend, and
    /// stores fresh answers.
    pub fn query(&self, req: &LlmRequest) -> Result<LlmResponse> {
        req.validate()?;
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(req) {
                return Ok(hit);
            }
        }
        let response = match &self.backend {
            Backend::Mock => query_mock(req)?,
            Backend::Remote(cfg) => {
                self.remote_calls.fetch_add(1, Ordering::Relaxed);
                remote::query_remote_limited(req, cfg, Some(&self.limiter))?
            }
        };
        if let Some(cache) = &self.cache {
            cache.put(req, &response)?;
        }
        Ok(response)
    }
}

/// Cached query with an explicit backend; see [`LlmClient::query`].
pub fn query_cached(req: &LlmRequest, cache: ResponseCache, backend: Backend) -> Result<LlmResponse> {
    LlmClient::new(backend, Some(cache)).query(req)
}
