use serde::{Deserialize, Serialize};

use super::client::LlmClient;
use super::hygiene::dedup_and_filter;
use super::parse::parse_response;
use super::prompt::{build_prompts, PromptSpec};
use crate::error::{Error, Result};

/// Empty-parse retries allowed per prompt on top of the first attempt.
pub const EMPTY_PARSE_RETRIES: usize = 2;

/// Record of one envisioning run. Near mode issues one prompt per ID label, so the
/// per-prompt fields are parallel lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvisionRun {
    pub run: usize,
    pub prompts: Vec<String>,
    pub raw_responses: Vec<String>,
    pub cache_keys: Vec<String>,
    pub candidates: Vec<String>,
    /// Post-hygiene outlier labels, capped at the requested count.
    pub outliers: Vec<String>,
    pub requested: usize,
}

/// Runs every prompt of `spec` once (retrying unparseable answers) and cleans the
/// combined candidates against the ID labels.
pub fn envision(spec: &PromptSpec, client: &LlmClient, run: usize) -> Result<EnvisionRun> {
    let prompts = build_prompts(spec);
    let mut raw_responses = Vec::with_capacity(prompts.len());
    let mut cache_keys = Vec::with_capacity(prompts.len());
    let mut candidates = Vec::new();

    for prompt in &prompts {
        let mut parsed = None;
        for attempt in 0..=EMPTY_PARSE_RETRIES {
            let exchange = client.query(prompt, run, attempt)?;
            match parse_response(&exchange.response) {
                Ok(items) => {
                    parsed = Some((exchange, items));
                    break;
                }
                Err(Error::EmptyParse) => continue,
                Err(e) => return Err(e),
            }
        }
        let Some((exchange, items)) = parsed else {
            return Err(Error::EnvisionFailed {
                run,
                attempts: EMPTY_PARSE_RETRIES + 1,
                reason: "no candidate labels in any response".into(),
            });
        };
        raw_responses.push(exchange.response);
        cache_keys.push(exchange.key);
        candidates.extend(items);
    }

    let requested = spec.requested();
    let mut outliers = dedup_and_filter(&candidates, spec.id_labels());
    outliers.truncate(requested);
    Ok(EnvisionRun {
        run,
        prompts,
        raw_responses,
        cache_keys,
        candidates,
        outliers: outliers.into_labels(),
        requested,
    })
}
