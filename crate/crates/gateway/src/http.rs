use sceneweave_core::context::estimate_tokens;
use sceneweave_core::llm::{Completion, LlmError, LlmProvider, PromptEnvelope};
use serde_json::{json, Value};
use std::time::Duration;

/// Chat-completion endpoint speaking the common `messages` request shape.
pub struct HttpProvider {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    structured_output: bool,
    agent: ureq::Agent,
}

impl HttpProvider {
    /// Reads the key from `api_key_env`; a missing variable is allowed for
    /// local endpoints that take no key.
    pub fn new(endpoint: &str, model: &str, api_key_env: &str, timeout_secs: u64, structured_output: bool) -> Self {
        let api_key = std::env::var(api_key_env).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::warn!("{api_key_env} is not set; requests go out without an Authorization header");
        }
        HttpProvider {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key,
            structured_output,
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(timeout_secs)).build(),
        }
    }

    fn request_body(&self, envelope: &PromptEnvelope) -> Value {
        let mut body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": envelope.system_message()},
                {"role": "user", "content": envelope.user_message()},
            ],
            "temperature": 0,
        });
        if self.structured_output {
            body["response_format"] = json!({"type": "json_object"});
        }
        body
    }
}

fn unavailable(message: impl std::fmt::Display) -> LlmError {
    LlmError::ProviderUnavailable(message.to_string())
}

impl LlmProvider for HttpProvider {
    fn complete(&mut self, envelope: &PromptEnvelope) -> Result<Completion, LlmError> {
        let mut request = self.agent.post(&self.endpoint).set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.set("Authorization", &format!("Bearer {key}"));
        }
        let response: Value = request
            .send_json(self.request_body(envelope))
            .map_err(unavailable)?
            .into_json()
            .map_err(unavailable)?;
        let text = response
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| unavailable("response has no choices[0].message.content"))?
            .to_string();
        let count = |key: &str, fallback: usize| {
            response.pointer(&format!("/usage/{key}")).and_then(Value::as_u64).unwrap_or(fallback as u64)
        };
        Ok(Completion {
            input_tokens: count("prompt_tokens", estimate_tokens(&envelope.full_text())),
            output_tokens: count("completion_tokens", estimate_tokens(&text)),
            text,
        })
    }

    fn structured_output(&self) -> bool {
        self.structured_output
    }
}
