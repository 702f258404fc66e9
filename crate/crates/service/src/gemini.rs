//! Text provider backed by the Gemini `generateContent` REST endpoint.

use std::time::Duration;

use serde_json::{json, Value};
use stpm_core::error::ExplainError;
use stpm_core::explain::{TextProvider, DEFAULT_MODEL};

pub const DEFAULT_ENDPOINT: &str = "https://generativelanguage.googleapis.com";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Clone, Debug)]
pub struct GeminiProvider {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl GeminiProvider {
    /// Reads `GEMINI_API_KEY`, `STPM_LLM_ENDPOINT` and `STPM_LLM_MODEL`.
    pub fn from_env() -> Self {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        GeminiProvider {
            endpoint: var("STPM_LLM_ENDPOINT").unwrap_or_else(|| DEFAULT_ENDPOINT.into()),
            model: var("STPM_LLM_MODEL").unwrap_or_else(|| DEFAULT_MODEL.into()),
            api_key: var("GEMINI_API_KEY"),
            timeout: DEFAULT_TIMEOUT,
        }
    }

    fn url(&self) -> String {
        format!(
            "{}/v1beta/models/{}:generateContent",
            self.endpoint.trim_end_matches('/'),
            self.model
        )
    }
}

fn unavailable(e: impl std::fmt::Display) -> ExplainError {
    ExplainError::ProviderUnavailable(e.to_string())
}

/// Concatenated text parts of the first candidate.
fn candidate_text(body: &Value) -> Option<String> {
    let parts = body.pointer("/candidates/0/content/parts")?.as_array()?;
    let text: String = parts
        .iter()
        .filter_map(|p| p.get("text").and_then(Value::as_str))
        .collect();
    (!text.is_empty()).then_some(text)
}

impl TextProvider for GeminiProvider {
    /// Blocking; call from a worker thread, not an async task.
    fn complete(&self, prompt: &str) -> Result<String, ExplainError> {
        let key = self
            .api_key
            .as_deref()
            .ok_or_else(|| unavailable("GEMINI_API_KEY is not set"))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(unavailable)?;
        let body = json!({
            "contents": [{"role": "user", "parts": [{"text": prompt}]}],
            "tools": [{"google_search": {}}],
        });
        let resp = client
            .post(self.url())
            .header("x-goog-api-key", key)
            .json(&body)
            .send()
            .map_err(unavailable)?;
        let status = resp.status();
        if !status.is_success() {
            let detail = resp.text().unwrap_or_default();
            return Err(unavailable(format!(
                "HTTP {status}: {}",
                detail.chars().take(300).collect::<String>()
            )));
        }
        let body: Value = resp.json().map_err(unavailable)?;
        candidate_text(&body).ok_or_else(|| unavailable("response has no candidate text"))
    }
}
