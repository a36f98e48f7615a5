//! Envisioning outlier class labels: prompt construction, the chat-completions client,
//! response parsing and label hygiene.

pub mod client;
pub mod hygiene;
pub mod parse;
pub mod prompt;
pub mod run;

pub use client::{cache_key, CacheEntry, EndpointConfig, Exchange, LlmClient, ResponseCache};
pub use hygiene::{dedup_and_filter, similarity_filter, DEFAULT_SIMILARITY_THRESHOLD};
pub use parse::{parse_response, render_bullets};
pub use prompt::{build_prompts, ClassType, PromptMode, PromptSpec};
pub use run::{envision, EnvisionRun};
