use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{LlmRequest, LlmResponse, ResponseSource, TokenUsage};
use crate::error::{Error, Result};
use crate::http::{self, RateLimiter, RetryPolicy};

/// OpenAI-compatible chat-completions service.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Base URL, e.g. `https://api.openai.com`; `/v1/chat/completions` is appended.
    pub endpoint: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    /// Explicit key; takes precedence over `api_key_env`. Never serialized.
    #[serde(skip)]
    pub api_key: Option<String>,
    pub requests_per_minute: u32,
    pub retry: RetryPolicy,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: "https://api.openai.com".into(),
            api_key_env: "TANS_LLM_API_KEY".into(),
            api_key: None,
            requests_per_minute: 500,
            retry: RetryPolicy::default(),
        }
    }
}

impl RemoteConfig {
    pub fn url(&self, path: &str) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with(path) {
            base.to_string()
        } else {
            format!("{base}{path}")
        }
    }

    pub fn resolve_key(&self) -> Option<String> {
        self.api_key.clone().or_else(|| std::env::var(&self.api_key_env).ok())
    }
}

/// Sends the prompt as a single user message and returns the assistant text.
pub fn query_remote(req: &LlmRequest, cfg: &RemoteConfig) -> Result<LlmResponse> {
    query_remote_limited(req, cfg, None)
}

pub(crate) fn query_remote_limited(req: &LlmRequest, cfg: &RemoteConfig, limiter: Option<&RateLimiter>) -> Result<LlmResponse> {
    req.validate()?;
    let body = json!({
        "model": req.model,
        "messages": [{"role": "user", "content": req.prompt}],
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    });
    let key = cfg.resolve_key();
    let response = http::post_json(&cfg.url("/v1/chat/completions"), key.as_deref(), &body, &cfg.retry, limiter)?;
    let text = response.body["choices"][0]["message"]["content"]
        .as_str()
        .ok_or_else(|| Error::MalformedResponse("missing choices[0].message.content".into()))?;
    if text.trim().is_empty() {
        return Err(Error::MalformedResponse("empty completion".into()));
    }
    let usage = &response.body["usage"];
    Ok(LlmResponse {
        text: text.to_string(),
        token_usage: TokenUsage {
            prompt_tokens: usage["prompt_tokens"].as_u64().unwrap_or(0),
            completion_tokens: usage["completion_tokens"].as_u64().unwrap_or(0),
        },
        backend: ResponseSource::Remote,
    })
}
