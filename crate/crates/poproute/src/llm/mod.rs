//! Language-model agent layer: prompt templates, a chat-completion client
//! with retries and an on-disk reply cache, tolerant reply parsing, and path
//! validation against the trajectory graph.
//!
//! The prompt renderings and reply field names are a fixed wire contract; the
//! stub transport in [`stub`] answers them with exact oracle output so the
//! whole layer can be exercised (and byte-compared against the oracle
//! backend) without network access.

pub mod client;
pub mod prompt;
pub mod reply;
pub mod stub;

use std::time::Duration;

use thiserror::Error;

pub use client::{
    count_tokens_heuristic, CacheEntry, CacheStats, ChatClient, ChatEndpointConfig,
    ChatTransport, InvokeOutcome, LlmCache, TokenUsage, TransportReply, UsageSource,
};
pub use prompt::{render_prompt, AgentKind, PromptContext};
pub use reply::{parse_reply, validate_paths, AgentReply, ParsedReply, ValidatedPaths};
pub use stub::StubTransport;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("{kind} prompt is missing its {slot} input")]
    MissingSlot { kind: AgentKind, slot: &'static str },
    #[error("endpoint returned HTTP {status}")]
    HttpStatus { status: u16 },
    #[error("endpoint kept rate limiting after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint reply carried no assistant message text")]
    MalformedEnvelope,
    #[error("credential variable {0} is not set in the environment")]
    MissingApiKey(String),
    #[error("could not parse {kind} reply as JSON after repairs: {excerpt:?}")]
    UnparseableReply { kind: AgentKind, excerpt: String },
    #[error("{kind} reply parsed but held no usable answer")]
    EmptyAnswer { kind: AgentKind },
    #[error("cache I/O failed: {0}")]
    CacheIo(#[from] std::io::Error),
}

impl LlmError {
    /// Errors worth another attempt: rate limiting, server-side failures,
    /// timeouts, and transport-level drops.
    pub(crate) fn retryable(&self) -> bool {
        matches!(
            self,
            LlmError::HttpStatus { status } if *status == 429 || *status >= 500
        ) || matches!(self, LlmError::Timeout(_) | LlmError::Transport(_))
    }
}
