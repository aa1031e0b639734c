//! HTTPS chat-completion provider.

use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use super::{CallState, LlmError, LlmSettings, Provider};

#[derive(Debug, Clone)]
pub struct LiveProvider {
    endpoint: String,
    credential_env: String,
    retries: u32,
    timeout: Duration,
}

impl LiveProvider {
    pub fn new(endpoint: &str, credential_env: &str, retries: u32, timeout: Duration) -> Self {
        LiveProvider {
            endpoint: endpoint.to_string(),
            credential_env: credential_env.to_string(),
            retries,
            timeout,
        }
    }

    fn agent(&self) -> ureq::Agent {
        let config = ureq::Agent::config_builder().timeout_global(Some(self.timeout)).http_status_as_error(true).build();
        ureq::Agent::new_with_config(config)
    }

    fn attempt(&self, agent: &ureq::Agent, key: Option<&str>, body: &Value) -> Result<String, Failure> {
        let mut req = agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(k) = key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::StatusCode(code @ (401 | 403))) => {
                return Err(Failure::Fatal(LlmError::AuthFailure(format!("HTTP {code} from {}", self.endpoint))))
            }
            Err(e) => return Err(Failure::Retry(e.to_string())),
        };
        let v: Value = resp.body_mut().read_json().map_err(|e| Failure::Retry(format!("bad response body: {e}")))?;
        response_text(&v).ok_or_else(|| Failure::Retry("response has no message content".to_string()))
    }
}

enum Failure {
    Retry(String),
    Fatal(LlmError),
}

/// Content of the first choice of an OpenAI-style chat completion.
fn response_text(v: &Value) -> Option<String> {
    let choice = v.get("choices")?.get(0)?;
    choice
        .get("message")
        .and_then(|m| m.get("content"))
        .or_else(|| choice.get("text"))
        .and_then(Value::as_str)
        .map(str::to_string)
}

pub fn request_body(prompt: &str, settings: &LlmSettings) -> Value {
    json!({
        "model": settings.model_id,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": settings.temperature,
        "top_p": settings.nucleus,
        "max_tokens": settings.max_tokens,
    })
}

impl Provider for LiveProvider {
    fn name(&self) -> String {
        format!("live:{}", self.endpoint)
    }

    fn complete(&self, prompt: &str, settings: &LlmSettings, _state: &mut CallState) -> Result<String, LlmError> {
        let key = std::env::var(&self.credential_env).ok().filter(|k| !k.is_empty());
        let body = request_body(prompt, settings);
        let agent = self.agent();
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(200 * u64::from(attempt)));
            }
            match self.attempt(&agent, key.as_deref(), &body) {
                Ok(text) => return Ok(text),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(msg)) => {
                    log::warn!("LLM request attempt {} failed: {msg}", attempt + 1);
                    last = msg;
                }
            }
        }
        Err(LlmError::ProviderUnavailable(format!("{} after {} attempts: {last}", self.endpoint, self.retries + 1)))
    }

    fn timestamp(&self, _state: &CallState) -> String {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        format!("unix:{secs}")
    }
}
