//! OpenAI-compatible chat-completions client. This is the only place in the
//! workspace that talks to an inference endpoint over the network.

use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::{Provider, ProviderConfig, ProviderError, ProviderRequest};

pub struct HttpProvider {
    config: ProviderConfig,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(config: ProviderConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build()
            .into();
        HttpProvider { config, agent }
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

/// Request body for one attempt.
pub(crate) fn chat_body(model: &str, request: &ProviderRequest) -> Value {
    let user_content = if request.images.is_empty() {
        Value::String(request.user.clone())
    } else {
        let engine = base64::engine::general_purpose::STANDARD;
        let mut parts = vec![json!({"type": "text", "text": request.user})];
        parts.extend(request.images.iter().map(|img| {
            json!({
                "type": "image_url",
                "image_url": {
                    "url": format!("data:{};base64,{}", img.media_type, engine.encode(&img.data))
                }
            })
        }));
        Value::Array(parts)
    };
    json!({
        "model": model,
        "temperature": request.temperature,
        "max_tokens": request.max_output_tokens,
        "response_format": {"type": "json_object"},
        "messages": [
            {"role": "system", "content": request.system},
            {"role": "user", "content": user_content},
        ],
    })
}

impl Provider for HttpProvider {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        let body = chat_body(&self.config.model_name, request);
        let mut call = self.agent.post(self.endpoint());
        if let Some(key) = &self.config.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = call.send_json(&body).map_err(|e| match e {
            ureq::Error::Timeout(_) => ProviderError::Timeout,
            other => ProviderError::Transport(other.to_string()),
        })?;
        let parsed: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::Transport(format!("unreadable response body: {e}")))?;
        parsed
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Transport("response has no choices[0].message.content".into()))
    }

    fn name(&self) -> &str {
        "http"
    }
}
