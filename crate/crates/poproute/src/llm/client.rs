//! Chat-completion client: endpoint configuration, a pluggable transport
//! trait, an HTTP implementation with bounded exponential backoff, heuristic
//! token accounting, and a content-addressed on-disk reply cache.

use std::env;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::LlmError;

/// Where a token count came from: reported by the provider, or estimated
/// locally as `ceil(chars / 4)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UsageSource {
    Provider,
    Heuristic,
}

/// Prompt/completion token counts for one agent call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub source: UsageSource,
}

impl TokenUsage {
    /// Zero usage, attributed to the heuristic counter (used for memoized and
    /// locally computed calls that never hit an endpoint).
    pub fn zero() -> Self {
        TokenUsage {
            prompt_tokens: 0,
            completion_tokens: 0,
            source: UsageSource::Heuristic,
        }
    }

    /// Estimate usage from raw text when the provider reports none.
    pub fn heuristic(prompt: &str, completion: &str) -> Self {
        TokenUsage {
            prompt_tokens: count_tokens_heuristic(prompt),
            completion_tokens: count_tokens_heuristic(completion),
            source: UsageSource::Heuristic,
        }
    }

    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }

    /// Sum counts; the result is `Provider`-sourced only when both sides are.
    pub fn accumulate(&self, other: &TokenUsage) -> TokenUsage {
        TokenUsage {
            prompt_tokens: self.prompt_tokens + other.prompt_tokens,
            completion_tokens: self.completion_tokens + other.completion_tokens,
            source: if self.source == UsageSource::Provider
                && other.source == UsageSource::Provider
            {
                UsageSource::Provider
            } else {
                UsageSource::Heuristic
            },
        }
    }
}

/// Estimate the token count of `text` as `ceil(chars / 4)`.
///
/// This intentionally counts Unicode scalar values, not bytes, so the
/// estimate does not inflate on multi-byte characters.
pub fn count_tokens_heuristic(text: &str) -> u64 {
    let chars = text.chars().count() as u64;
    chars.div_ceil(4)
}

/// Connection details for a chat-completion endpoint.
///
/// The credential is never stored here: `api_key_env` names an environment
/// variable that is read at request time, so keys never appear in config
/// files, caches, or reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatEndpointConfig {
    /// Full URL of the chat-completions route.
    pub base_url: String,
    /// Model identifier sent in the request body (also part of the cache key).
    pub model: String,
    /// Sampling temperature; 0 keeps replies reproducible.
    pub temperature: f64,
    /// Per-request timeout in seconds.
    pub timeout_secs: u64,
    /// How many times a retryable failure (429, 5xx, timeout) is retried.
    pub max_retries: u32,
    /// Base delay for exponential backoff between retries.
    pub retry_backoff_ms: u64,
    /// Name of the environment variable holding the bearer token, if any.
    pub api_key_env: Option<String>,
}

impl ChatEndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        ChatEndpointConfig {
            base_url: base_url.into(),
            model: model.into(),
            temperature: 0.0,
            timeout_secs: 60,
            max_retries: 3,
            retry_backoff_ms: 250,
            api_key_env: None,
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

/// One raw exchange with a transport: the assistant text, the provider's
/// token counts when it reported them, and how long the exchange took.
#[derive(Debug, Clone)]
pub struct TransportReply {
    pub text: String,
    pub provider_usage: Option<(u64, u64)>,
    pub latency_ms: u64,
}

/// Anything that can answer a prompt: the HTTP transport for live endpoints,
/// or an in-process stand-in for tests and offline runs.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, config: &ChatEndpointConfig, prompt: &str)
        -> Result<TransportReply, LlmError>;
}

/// HTTP transport speaking the common chat-completions wire shape:
/// `{"model", "temperature", "messages": [{"role": "user", "content"}]}` in,
/// `choices[0].message.content` out. Retries 429/5xx/timeouts with
/// exponential backoff.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Self {
        HttpTransport {
            client: reqwest::blocking::Client::new(),
        }
    }

    fn send_once(
        &self,
        config: &ChatEndpointConfig,
        prompt: &str,
    ) -> Result<TransportReply, LlmError> {
        let body = serde_json::json!({
            "model": config.model,
            "temperature": config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut request = self
            .client
            .post(&config.base_url)
            .timeout(config.timeout())
            .header("content-type", "application/json")
            .json(&body);
        if let Some(var) = &config.api_key_env {
            let key = env::var(var).map_err(|_| LlmError::MissingApiKey(var.clone()))?;
            request = request.bearer_auth(key);
        }
        let started = Instant::now();
        let response = request.send().map_err(|e| classify_reqwest(e, config))?;
        let status = response.status().as_u16();
        if status != 200 {
            return Err(LlmError::HttpStatus { status });
        }
        let envelope: serde_json::Value = response
            .json()
            .map_err(|e| LlmError::Transport(format!("invalid JSON envelope: {e}")))?;
        let latency_ms = started.elapsed().as_millis() as u64;
        let text = envelope
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .ok_or(LlmError::MalformedEnvelope)?
            .to_string();
        let provider_usage = match (
            envelope.pointer("/usage/prompt_tokens").and_then(|v| v.as_u64()),
            envelope
                .pointer("/usage/completion_tokens")
                .and_then(|v| v.as_u64()),
        ) {
            (Some(p), Some(c)) => Some((p, c)),
            _ => None,
        };
        Ok(TransportReply {
            text,
            provider_usage,
            latency_ms,
        })
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new()
    }
}

fn classify_reqwest(err: reqwest::Error, config: &ChatEndpointConfig) -> LlmError {
    if err.is_timeout() {
        LlmError::Timeout(config.timeout())
    } else {
        LlmError::Transport(err.to_string())
    }
}

impl ChatTransport for HttpTransport {
    fn complete(
        &self,
        config: &ChatEndpointConfig,
        prompt: &str,
    ) -> Result<TransportReply, LlmError> {
        let mut attempt: u32 = 0;
        loop {
            match self.send_once(config, prompt) {
                Ok(reply) => return Ok(reply),
                Err(err) if err.retryable() && attempt < config.max_retries => {
                    let exponent = attempt.min(10);
                    let delay = config
                        .retry_backoff_ms
                        .saturating_mul(1u64 << exponent)
                        .min(10_000);
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                Err(LlmError::HttpStatus { status: 429 }) => {
                    return Err(LlmError::RateLimited {
                        attempts: attempt + 1,
                    })
                }
                Err(err) => return Err(err),
            }
        }
    }
}

/// One cached exchange. The full request identity (model, temperature,
/// prompt) is stored alongside the reply so entries can be exported,
/// re-imported, and re-keyed; latency is stored so cached replays report the
/// timings of the original live run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEntry {
    pub model: String,
    pub temperature: f64,
    pub prompt: String,
    pub reply: String,
    pub provider_usage: Option<(u64, u64)>,
    pub latency_ms: u64,
    pub unix_time: u64,
}

/// Totals reported by `cache stats`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CacheStats {
    pub entries: usize,
    pub bytes: u64,
}

/// Content-addressed reply cache: one JSON file per (model, temperature,
/// prompt) key, written atomically via a temp file + rename.
#[derive(Debug, Clone)]
pub struct LlmCache {
    dir: PathBuf,
}

impl LlmCache {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(LlmCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Cache key: SHA-256 over the request identity. Temperature is rendered
    /// with `{:?}` so `0.0` and `0.25` key differently and deterministically.
    pub fn key(model: &str, temperature: f64, prompt: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(model.as_bytes());
        hasher.update([0x1f]);
        hasher.update(format!("{temperature:?}").as_bytes());
        hasher.update([0x1f]);
        hasher.update(prompt.as_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// Fetch an entry; absent or unreadable files both read as a miss.
    pub fn lookup(&self, key: &str) -> Option<CacheEntry> {
        let bytes = fs::read(self.path_for(key)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    pub fn store(&self, key: &str, entry: &CacheEntry) -> io::Result<()> {
        let bytes = serde_json::to_vec_pretty(entry).expect("cache entry serializes");
        let tmp = self.dir.join(format!(".{key}.tmp"));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, self.path_for(key))?;
        Ok(())
    }

    fn entry_files(&self) -> io::Result<Vec<PathBuf>> {
        let mut files = Vec::new();
        for item in fs::read_dir(&self.dir)? {
            let path = item?.path();
            let is_entry = path.extension().is_some_and(|e| e == "json")
                && path
                    .file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| !n.starts_with('.'));
            if is_entry {
                files.push(path);
            }
        }
        files.sort();
        Ok(files)
    }

    pub fn stats(&self) -> io::Result<CacheStats> {
        let files = self.entry_files()?;
        let mut bytes = 0u64;
        for f in &files {
            bytes += fs::metadata(f)?.len();
        }
        Ok(CacheStats {
            entries: files.len(),
            bytes,
        })
    }

    /// Delete every entry; returns how many were removed.
    pub fn clear(&self) -> io::Result<usize> {
        let files = self.entry_files()?;
        for f in &files {
            fs::remove_file(f)?;
        }
        Ok(files.len())
    }

    /// Write all entries into one JSON array at `out`; returns the count.
    pub fn export(&self, out: &Path) -> io::Result<usize> {
        let mut entries = Vec::new();
        for f in self.entry_files()? {
            let bytes = fs::read(&f)?;
            if let Ok(entry) = serde_json::from_slice::<CacheEntry>(&bytes) {
                entries.push(entry);
            }
        }
        let body = serde_json::to_vec_pretty(&entries).expect("entries serialize");
        fs::write(out, body)?;
        Ok(entries.len())
    }

    /// Load entries from a bundle produced by [`LlmCache::export`]. Keys are
    /// recomputed from each entry's own fields, so bundles are portable
    /// across cache directories.
    pub fn import(&self, bundle: &Path) -> io::Result<usize> {
        let bytes = fs::read(bundle)?;
        let entries: Vec<CacheEntry> = serde_json::from_slice(&bytes)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let count = entries.len();
        for entry in &entries {
            let key = LlmCache::key(&entry.model, entry.temperature, &entry.prompt);
            self.store(&key, entry)?;
        }
        Ok(count)
    }
}

/// The outcome of one [`ChatClient::invoke`]: reply text plus the accounting
/// the pipeline records per agent call.
#[derive(Debug, Clone)]
pub struct InvokeOutcome {
    pub text: String,
    pub usage: TokenUsage,
    pub latency_ms: u64,
    pub cache_hit: bool,
}

/// Cache-aware prompt runner: checks the cache, falls through to the
/// transport, and stores fresh replies (with their live latency) for replay.
pub struct ChatClient {
    config: ChatEndpointConfig,
    transport: Arc<dyn ChatTransport>,
    cache: Option<LlmCache>,
}

impl ChatClient {
    pub fn new(
        config: ChatEndpointConfig,
        transport: Arc<dyn ChatTransport>,
        cache: Option<LlmCache>,
    ) -> Self {
        ChatClient {
            config,
            transport,
            cache,
        }
    }

    /// Client backed by the HTTP transport.
    pub fn over_http(config: ChatEndpointConfig, cache: Option<LlmCache>) -> Self {
        ChatClient::new(config, Arc::new(HttpTransport::new()), cache)
    }

    pub fn config(&self) -> &ChatEndpointConfig {
        &self.config
    }

    pub fn invoke(&self, prompt: &str) -> Result<InvokeOutcome, LlmError> {
        let key = LlmCache::key(&self.config.model, self.config.temperature, prompt);
        if let Some(cache) = &self.cache {
            if let Some(entry) = cache.lookup(&key) {
                return Ok(InvokeOutcome {
                    usage: usage_from(&entry.reply, prompt, entry.provider_usage),
                    text: entry.reply,
                    latency_ms: entry.latency_ms,
                    cache_hit: true,
                });
            }
        }
        let reply = self.transport.complete(&self.config, prompt)?;
        if let Some(cache) = &self.cache {
            let entry = CacheEntry {
                model: self.config.model.clone(),
                temperature: self.config.temperature,
                prompt: prompt.to_string(),
                reply: reply.text.clone(),
                provider_usage: reply.provider_usage,
                latency_ms: reply.latency_ms,
                unix_time: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
            };
            cache.store(&key, &entry)?;
        }
        Ok(InvokeOutcome {
            usage: usage_from(&reply.text, prompt, reply.provider_usage),
            text: reply.text,
            latency_ms: reply.latency_ms,
            cache_hit: false,
        })
    }
}

fn usage_from(reply: &str, prompt: &str, provider: Option<(u64, u64)>) -> TokenUsage {
    match provider {
        Some((p, c)) => TokenUsage {
            prompt_tokens: p,
            completion_tokens: c,
            source: UsageSource::Provider,
        },
        None => TokenUsage::heuristic(prompt, reply),
    }
}
