//! OpenAI-compatible chat-completions transport.

use std::time::Duration;

use serde_json::{json, Value};

use super::{CompletionRequest, Transport, TransportError};
use crate::error::{Error, Result};

pub struct HttpChat {
    agent: ureq::Agent,
    url: String,
    model: String,
    api_key: Option<String>,
    max_output_tokens: u32,
}

impl HttpChat {
    /// Reads the API key from `auth_env`; a missing variable is a
    /// configuration error raised before any request is made.
    pub fn new(
        base_url: &str,
        model: &str,
        auth_env: Option<&str>,
        max_output_tokens: u32,
    ) -> Result<Self> {
        let api_key = match auth_env {
            Some(var) => match std::env::var(var) {
                Ok(v) if !v.trim().is_empty() => Some(v),
                _ => {
                    return Err(Error::Config(format!(
                        "environment variable `{var}` with the provider API key is not set"
                    )))
                }
            },
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(180)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpChat {
            agent,
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model: model.to_string(),
            api_key,
            max_output_tokens,
        })
    }
}

impl Transport for HttpChat {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, TransportError> {
        let body = json!({
            "model": self.model,
            "temperature": request.temperature,
            "max_tokens": self.max_output_tokens,
            "messages": [{ "role": "user", "content": request.prompt }],
        });
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(TransportError::Transient(format!("HTTP {status}")));
        }
        if status >= 400 {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(TransportError::Rejected(format!("HTTP {status}: {text}")));
        }
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| TransportError::Transient(format!("bad response body: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| TransportError::Rejected("response has no message content".into()))
    }
}
