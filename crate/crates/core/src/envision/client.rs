//! OpenAI-compatible chat-completions client with an on-disk response cache.
//!
//! Every exchange is identified by a SHA-256 key over the prompt, model, sampling
//! temperature, run index and retry attempt. Live mode consults the cache first and
//! stores every fresh response; replay mode never touches the network.

use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bundle::write_atomic;
use crate::error::{Error, Result};

/// Sampling temperature sent with every request.
pub const TEMPERATURE: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    /// Base URL up to and including the API version, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: usize,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_max_attempts() -> usize {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

fn default_timeout_secs() -> u64 {
    120
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: None,
            max_attempts: default_max_attempts(),
            retry_backoff_ms: default_backoff_ms(),
            timeout_secs: default_timeout_secs(),
        }
    }

    fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    attempt: usize,
    model: &'a str,
    prompt: &'a str,
    run: usize,
    temperature: f64,
}

/// Hex SHA-256 over the canonical JSON encoding of the request identity.
pub fn cache_key(prompt: &str, model: &str, temperature: f64, run: usize, attempt: usize) -> String {
    let material = KeyMaterial {
        attempt,
        model,
        prompt,
        run,
        temperature,
    };
    let bytes = serde_json::to_vec(&material).expect("key material serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub prompt: String,
    pub model: String,
    pub response: String,
}

/// `<dir>/<first two hex chars>/<key>.json`
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2.min(key.len())]).join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<CacheEntry>> {
        let path = self.path_for(key);
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map(Some).map_err(|e| {
                Error::InvalidConfig(format!("corrupt cache entry {}: {e}", path.display()))
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(Error::Write { path, source }),
        }
    }

    pub fn put(&self, key: &str, entry: &CacheEntry) -> Result<PathBuf> {
        let path = self.path_for(key);
        let mut json = serde_json::to_vec_pretty(entry).expect("cache entry serializes");
        json.push(b'\n');
        write_atomic(&path, &json)?;
        Ok(path)
    }
}

/// One answered prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exchange {
    pub key: String,
    pub response: String,
    pub from_cache: bool,
}

#[derive(Debug, Clone)]
pub struct LlmClient {
    endpoint: EndpointConfig,
    cache: ResponseCache,
    replay: bool,
}

impl LlmClient {
    pub fn new(endpoint: EndpointConfig, cache: ResponseCache, replay: bool) -> Self {
        Self {
            endpoint,
            cache,
            replay,
        }
    }

    pub fn endpoint(&self) -> &EndpointConfig {
        &self.endpoint
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn is_replay(&self) -> bool {
        self.replay
    }

    pub fn key_for(&self, prompt: &str, run: usize, attempt: usize) -> String {
        cache_key(prompt, &self.endpoint.model, TEMPERATURE, run, attempt)
    }

    pub fn query(&self, prompt: &str, run: usize, attempt: usize) -> Result<Exchange> {
        let key = self.key_for(prompt, run, attempt);
        if let Some(entry) = self.cache.get(&key)? {
            return Ok(Exchange {
                key,
                response: entry.response,
                from_cache: true,
            });
        }
        if self.replay {
            return Err(Error::ReplayMiss { key });
        }
        let response = self.post(prompt)?;
        self.cache.put(
            &key,
            &CacheEntry {
                prompt: prompt.to_owned(),
                model: self.endpoint.model.clone(),
                response: response.clone(),
            },
        )?;
        Ok(Exchange {
            key,
            response,
            from_cache: false,
        })
    }

    fn post(&self, prompt: &str) -> Result<String> {
        let api_key = match &self.endpoint.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::InvalidConfig(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(self.endpoint.timeout_secs)))
            .build()
            .into();
        let body = serde_json::json!({
            "model": self.endpoint.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let url = self.endpoint.completions_url();
        let attempts = self.endpoint.max_attempts.max(1);

        let mut last_status = None;
        let mut last_message = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let backoff = self.endpoint.retry_backoff_ms.saturating_mul(1 << (attempt - 1).min(10));
                thread::sleep(Duration::from_millis(backoff));
            }
            let mut request = agent.post(&url);
            if let Some(key) = &api_key {
                request = request.header("Authorization", &format!("Bearer {key}"));
            }
            let mut response = match request.send_json(&body) {
                Ok(r) => r,
                Err(e) => {
                    last_status = None;
                    last_message = e.to_string();
                    continue;
                }
            };
            let status = response.status().as_u16();
            if (200..300).contains(&status) {
                let parsed: ChatResponse = response.body_mut().read_json().map_err(|e| Error::Transport {
                    status: Some(status),
                    message: format!("malformed chat-completion body: {e}"),
                })?;
                return parsed
                    .choices
                    .into_iter()
                    .next()
                    .and_then(|c| c.message.content)
                    .ok_or_else(|| Error::Transport {
                        status: Some(status),
                        message: "response has no choices[0].message.content".into(),
                    });
            }
            last_status = Some(status);
            last_message = format!(
                "HTTP {status}: {}",
                response.body_mut().read_to_string().unwrap_or_default()
            );
            let retryable = status == 429 || status >= 500;
            if !retryable {
                break;
            }
        }
        Err(Error::Transport {
            status: last_status,
            message: format!("{url}: {last_message}"),
        })
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}
