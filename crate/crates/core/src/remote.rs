//! Blocking client for a JSON completion endpoint.
//!
//! Wire shape: `POST {model, prompt, max_tokens}` answered by `{text}`.

use std::env;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_URL: &str = "GLLM_ENDPOINT_URL";
pub const ENV_API_KEY: &str = "GLLM_API_KEY";
pub const ENV_MODEL: &str = "GLLM_MODEL";
pub const ENV_TIMEOUT: &str = "GLLM_TIMEOUT_SECS";

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_MAX_TOKENS: u32 = 2048;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RemoteError {
    #[error("endpoint configuration missing: {0}")]
    Config(String),
    #[error("request timed out")]
    Timeout,
    #[error("endpoint answered HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("transport error: {0}")]
    Transport(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
    pub max_tokens: u32,
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        EndpointConfig {
            url: url.into(),
            api_key: None,
            model: model.into(),
            timeout: DEFAULT_TIMEOUT,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    /// Reads `GLLM_ENDPOINT_URL`, `GLLM_API_KEY`, `GLLM_MODEL` and
    /// `GLLM_TIMEOUT_SECS`.
    pub fn from_env() -> Result<Self, RemoteError> {
        Self::from_lookup(|k| env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, RemoteError> {
        let url = get(ENV_URL).ok_or_else(|| RemoteError::Config(ENV_URL.into()))?;
        let model = get(ENV_MODEL).ok_or_else(|| RemoteError::Config(ENV_MODEL.into()))?;
        let mut cfg = EndpointConfig::new(url, model);
        cfg.api_key = get(ENV_API_KEY).filter(|k| !k.is_empty());
        if let Some(t) = get(ENV_TIMEOUT) {
            let secs: f64 = t
                .trim()
                .parse()
                .ok()
                .filter(|s: &f64| s.is_finite() && *s > 0.0)
                .ok_or_else(|| RemoteError::Config(format!("{ENV_TIMEOUT}={t}")))?;
            cfg.timeout = Duration::from_secs_f64(secs);
        }
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

#[derive(Debug, Clone)]
pub struct CompletionClient {
    config: EndpointConfig,
    http: reqwest::blocking::Client,
}

impl CompletionClient {
    pub fn new(config: EndpointConfig) -> Result<Self, RemoteError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| RemoteError::Transport(e.to_string()))?;
        Ok(CompletionClient { config, http })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// Sends one prompt and returns the completion text verbatim.
    pub fn complete(&self, prompt: &str) -> Result<String, RemoteError> {
        let body = CompletionRequest {
            model: &self.config.model,
            prompt,
            max_tokens: self.config.max_tokens,
        };
        let mut req = self.http.post(&self.config.url).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(classify)?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(RemoteError::Http {
                status: status.as_u16(),
                body,
            });
        }
        let text = resp.text().map_err(classify)?;
        serde_json::from_str::<CompletionResponse>(&text)
            .map(|r| r.text)
            .map_err(|e| RemoteError::Malformed(e.to_string()))
    }
}

fn classify(e: reqwest::Error) -> RemoteError {
    if e.is_timeout() {
        RemoteError::Timeout
    } else {
        RemoteError::Transport(e.to_string())
    }
}
