//! Shared HTTP plumbing for remote captioning and embedding backends. Both
//! speak an OpenAI-compatible JSON API; this module owns endpoint
//! configuration, authentication, retry with exponential backoff, and the
//! retryable/fatal error split.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One remote API target. `api_key_env` names the environment variable read
/// at request time; the key itself is never stored in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteEndpoint {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_s: u64,
}

impl Default for RemoteEndpoint {
    fn default() -> Self {
        RemoteEndpoint {
            endpoint: String::new(),
            model: String::new(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_retries: 3,
            backoff_ms: 200,
            timeout_s: 60,
        }
    }
}

/// Outcome of a single HTTP exchange, before retry policy is applied.
enum Attempt {
    Ok(serde_json::Value),
    /// Worth retrying: 429, any 5xx, or a transport failure.
    Retryable(String),
    /// Fatal: any other non-2xx status.
    Fatal { status: u16, body: String },
}

impl RemoteEndpoint {
    pub fn validate(&self) -> Result<()> {
        if self.endpoint.is_empty() {
            return Err(Error::Config("remote endpoint URL is empty".into()));
        }
        if self.model.is_empty() {
            return Err(Error::Config("remote model name is empty".into()));
        }
        if std::env::var(&self.api_key_env).is_err() {
            return Err(Error::Config(format!(
                "environment variable {} is not set",
                self.api_key_env
            )));
        }
        Ok(())
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.endpoint.trim_end_matches('/'), path)
    }

    fn attempt(&self, path: &str, body: &serde_json::Value) -> Attempt {
        let key = std::env::var(&self.api_key_env).unwrap_or_default();
        let client = match reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(self.timeout_s))
            .build()
        {
            Ok(c) => c,
            Err(e) => return Attempt::Retryable(format!("client build failed: {e}")),
        };
        let resp = client
            .post(self.url(path))
            .header("Authorization", format!("Bearer {key}"))
            .json(body)
            .send();
        let resp = match resp {
            Ok(r) => r,
            Err(e) => return Attempt::Retryable(format!("transport error: {e}")),
        };
        let status = resp.status().as_u16();
        let text = resp.text().unwrap_or_default();
        if (200..300).contains(&status) {
            match serde_json::from_str(&text) {
                Ok(v) => Attempt::Ok(v),
                Err(e) => Attempt::Retryable(format!("malformed response body: {e}")),
            }
        } else if status == 429 || status >= 500 {
            Attempt::Retryable(format!("status {status}: {text}"))
        } else {
            Attempt::Fatal { status, body: text }
        }
    }

    /// POST a JSON body and parse the JSON reply. Retryable failures are
    /// retried up to `max_retries` times with backoff doubling per attempt;
    /// other HTTP errors surface immediately.
    pub fn post_json(&self, path: &str, body: &serde_json::Value) -> Result<serde_json::Value> {
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                let wait = self.backoff_ms.saturating_mul(1u64 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            match self.attempt(path, body) {
                Attempt::Ok(v) => return Ok(v),
                Attempt::Retryable(msg) => last = msg,
                Attempt::Fatal { status, body } => {
                    return Err(Error::Remote { status, body });
                }
            }
        }
        Err(Error::RemoteExhausted {
            attempts: self.max_retries + 1,
            message: last,
        })
    }
}
