use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{CompletionProvider, ProviderParams, USER_TAG};
use crate::error::{Error, Result};

/// Settings for an HTTP text-completion endpoint speaking the common
/// `{"model", "prompt", ...}` -> `{"choices": [{"text"}]}` protocol.
/// The credential is read from the environment variable named by
/// `api_key_env`, never from the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteProviderConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub max_requests_per_second: f64,
    pub timeout_secs: u64,
    pub params: ProviderParams,
}

impl Default for RemoteProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/completions".into(),
            model: "davinci-002".into(),
            api_key_env: "TRAITGEN_API_KEY".into(),
            max_requests_per_second: 2.0,
            timeout_secs: 60,
            params: ProviderParams::new(),
        }
    }
}

/// Spaces calls at least `1 / rate` seconds apart across all threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    pub fn new(per_second: f64) -> Self {
        let interval = if per_second > 0.0 {
            Duration::from_secs_f64(1.0 / per_second)
        } else {
            Duration::ZERO
        };
        Self {
            interval,
            next: Mutex::new(Instant::now()),
        }
    }

    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().expect("rate limiter poisoned");
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

pub struct RemoteProvider {
    config: RemoteProviderConfig,
    api_key: String,
    client: reqwest::blocking::Client,
    limiter: RateLimiter,
}

impl RemoteProvider {
    pub fn from_config(config: RemoteProviderConfig) -> Result<Self> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            Error::Config(format!(
                "environment variable {} is not set",
                config.api_key_env
            ))
        })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Provider(e.to_string()))?;
        Ok(Self {
            limiter: RateLimiter::new(config.max_requests_per_second),
            config,
            api_key,
            client,
        })
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
}

impl CompletionProvider for RemoteProvider {
    fn name(&self) -> &str {
        &self.config.model
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn complete(&self, prompt: &str, params: &ProviderParams) -> Result<String> {
        let mut body = serde_json::Map::new();
        body.insert("model".into(), self.config.model.clone().into());
        body.insert("prompt".into(), prompt.into());
        body.insert("stop".into(), serde_json::json!([format!("\n{USER_TAG}")]));
        for (k, v) in self.config.params.iter().chain(params) {
            body.insert(k.clone(), v.clone());
        }
        self.limiter.acquire();
        let response = self
            .client
            .post(&self.config.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| Error::Provider(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(Error::Provider(format!(
                "{} returned {status}",
                self.config.endpoint
            )));
        }
        let parsed: CompletionResponse = response
            .json()
            .map_err(|e| Error::Provider(format!("bad response body: {e}")))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.text)
            .unwrap_or_default();
        if text.trim().is_empty() {
            return Err(Error::Provider("empty completion".into()));
        }
        Ok(text)
    }
}
