use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::http::{JsonPoster, RetryPolicy};

use super::prompt::PromptBundle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub retry: RetryPolicy,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: "http://127.0.0.1:8000".into(),
            model: "gpt-4o-mini".into(),
            retry: RetryPolicy::default(),
        }
    }
}

/// Chat-completion client; one request per prompt, greedy decoding.
pub struct LlmClient {
    url: String,
    model: String,
    poster: JsonPoster,
}

impl LlmClient {
    pub fn new(config: &LlmConfig) -> Result<Self> {
        Ok(LlmClient {
            url: format!("{}/v1/chat/completions", config.endpoint.trim_end_matches('/')),
            model: config.model.clone(),
            poster: JsonPoster::new(config.retry)?,
        })
    }

    pub fn request_body(&self, bundle: &PromptBundle) -> serde_json::Value {
        json!({
            "model": self.model,
            "messages": bundle.messages,
            "temperature": 0,
            "seed": 0,
        })
    }

    /// Reply text of the first choice, verbatim.
    pub fn complete(&self, bundle: &PromptBundle) -> Result<String> {
        let reply = self.poster.post(&self.url, &self.request_body(bundle))?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_owned)
            .ok_or_else(|| Error::Protocol(format!("no choices[0].message.content in reply from {}", self.url)))
    }
}

pub fn call_llm(config: &LlmConfig, bundle: &PromptBundle) -> Result<String> {
    LlmClient::new(config)?.complete(bundle)
}
