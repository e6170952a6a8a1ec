//! Blocking JSON POST with retries, shared by the chat and embedding clients.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles after every failure.
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    pub timeout_secs: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
            timeout_secs: 60,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, failed_attempts: u32) -> Duration {
        let factor = 1u64 << failed_attempts.saturating_sub(1).min(20);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

/// Spaces requests at least `60 / requests_per_minute` seconds apart across
/// all threads sharing it.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Instant>,
}

impl RateLimiter {
    pub fn new(requests_per_minute: u32) -> Self {
        let interval = if requests_per_minute == 0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(60.0 / requests_per_minute as f64)
        };
        RateLimiter {
            interval,
            next_slot: Mutex::new(Instant::now()),
        }
    }

    pub fn acquire(&self) {
        if self.interval.is_zero() {
            return;
        }
        let wait = {
            let mut next = self.next_slot.lock().unwrap();
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

pub struct JsonResponse {
    pub body: Value,
    pub attempts: u32,
}

enum Failure {
    Transient(String),
    Fatal(Error),
}

/// POSTs `body` to `url`, retrying on HTTP 429, 5xx, timeouts and transport
/// errors. 401/403 fail immediately with [`Error::Credentials`].
pub fn post_json(
    url: &str,
    api_key: Option<&str>,
    body: &Value,
    policy: &RetryPolicy,
    limiter: Option<&RateLimiter>,
) -> Result<JsonResponse> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(policy.timeout_secs)))
        .build()
        .into();
    let attempts = policy.max_attempts.max(1);
    let mut last = String::new();
    for attempt in 1..=attempts {
        if let Some(limiter) = limiter {
            limiter.acquire();
        }
        match try_post(&agent, url, api_key, body) {
            Ok(body) => return Ok(JsonResponse { body, attempts: attempt }),
            Err(Failure::Fatal(e)) => return Err(e),
            Err(Failure::Transient(msg)) => {
                log::warn!("{url}: attempt {attempt}/{attempts} failed: {msg}");
                last = msg;
                if attempt < attempts {
                    std::thread::sleep(policy.delay(attempt));
                }
            }
        }
    }
    Err(Error::RetriesExhausted { attempts, last })
}

fn try_post(agent: &ureq::Agent, url: &str, api_key: Option<&str>, body: &Value) -> std::result::Result<Value, Failure> {
    let mut request = agent.post(url).header("Content-Type", "application/json");
    if let Some(key) = api_key {
        request = request.header("Authorization", &format!("Bearer {key}"));
    }
    match request.send_json(body) {
        Ok(mut response) => response
            .body_mut()
            .read_json::<Value>()
            .map_err(|e| Failure::Fatal(Error::MalformedResponse(e.to_string()))),
        Err(ureq::Error::StatusCode(status)) => match status {
            401 | 403 => Err(Failure::Fatal(Error::Credentials { status })),
            429 | 500..=599 => Err(Failure::Transient(format!("HTTP {status}"))),
            _ => Err(Failure::Fatal(Error::Remote(format!("HTTP {status}")))),
        },
        Err(e @ (ureq::Error::BadUri(_) | ureq::Error::InvalidProxyUrl)) => {
            Err(Failure::Fatal(Error::Remote(e.to_string())))
        }
        Err(e) => Err(Failure::Transient(e.to_string())),
    }
}
