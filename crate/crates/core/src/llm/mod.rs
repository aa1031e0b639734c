//! LLM providers, prompts, code extraction and corrective prompts.

pub mod live;
pub mod mock;
pub mod prompts;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::csrc::{parse_unit, ItemKind};
pub use live::LiveProvider;
pub use mock::{MockProvider, MockScript};
pub use prompts::{bindings, render_prompt, PromptSet, PromptTemplate, TemplateId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("LLM provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("LLM authentication failed: {0}")]
    AuthFailure(String),
    #[error("LLM request budget of {0} exhausted")]
    BudgetExhausted(u32),
    #[error("no code found in LLM response")]
    NoCodeFound,
    #[error("prompt placeholder `{0}` has no binding")]
    MissingBinding(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmSettings {
    pub temperature: f64,
    pub nucleus: f64,
    pub max_tokens: u32,
    pub model_id: String,
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings { temperature: 0.2, nucleus: 0.2, max_tokens: 4096, model_id: "mock".to_string() }
    }
}

impl LlmSettings {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if !(self.nucleus > 0.0 && self.nucleus <= 1.0) {
            return Err(format!("nucleus {} outside (0, 1]", self.nucleus));
        }
        if self.max_tokens == 0 {
            return Err("max_tokens must be positive".to_string());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmExchange {
    pub id: String,
    pub prompt: String,
    pub response: String,
    pub settings: LlmSettings,
    pub provider: String,
    pub timestamp: String,
    pub extracted_code: Option<String>,
    /// Set when the request failed; `response` is then empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Per-session state handed to providers on each call.
#[derive(Debug, Clone, Default)]
pub struct CallState {
    /// 1-based sequence number of this request within the session.
    pub seq: u32,
    /// Next unused entry of a mock fallback list.
    pub fallback_cursor: usize,
}

pub trait Provider: Send + Sync {
    fn name(&self) -> String;
    fn complete(&self, prompt: &str, settings: &LlmSettings, state: &mut CallState) -> Result<String, LlmError>;
    fn timestamp(&self, state: &CallState) -> String;
    /// True when responses depend only on the prompt and session history.
    fn is_deterministic(&self) -> bool {
        false
    }
}

pub type ProviderHandle = Arc<dyn Provider>;

/// Receives every exchange before `request` returns.
pub trait ExchangeSink: Send {
    fn record(&mut self, exchange: &LlmExchange) -> Result<(), LlmError>;
}

/// Collects exchanges in memory.
#[derive(Debug, Default, Clone)]
pub struct MemorySink(pub Arc<Mutex<Vec<LlmExchange>>>);

impl ExchangeSink for MemorySink {
    fn record(&mut self, exchange: &LlmExchange) -> Result<(), LlmError> {
        self.0.lock().expect("sink poisoned").push(exchange.clone());
        Ok(())
    }
}

/// One attempt's view of a provider: a request budget and a transcript.
pub struct LlmSession {
    provider: ProviderHandle,
    label: String,
    budget: u32,
    state: CallState,
    sink: Option<Box<dyn ExchangeSink>>,
    last_id: Option<String>,
}

impl fmt::Debug for LlmSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmSession")
            .field("provider", &self.provider.name())
            .field("label", &self.label)
            .field("budget", &self.budget)
            .field("used", &self.state.seq)
            .finish()
    }
}

impl LlmSession {
    pub fn new(provider: ProviderHandle, label: &str, budget: u32) -> Self {
        LlmSession { provider, label: label.to_string(), budget, state: CallState::default(), sink: None, last_id: None }
    }

    pub fn with_sink(mut self, sink: Box<dyn ExchangeSink>) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn set_sink(&mut self, sink: Box<dyn ExchangeSink>) {
        self.sink = Some(sink);
    }

    pub fn used(&self) -> u32 {
        self.state.seq
    }

    pub fn remaining(&self) -> u32 {
        self.budget.saturating_sub(self.state.seq)
    }

    pub fn provider_name(&self) -> String {
        self.provider.name()
    }

    pub fn is_deterministic(&self) -> bool {
        self.provider.is_deterministic()
    }

    /// Id of the most recent exchange, failed or not.
    pub fn last_exchange_id(&self) -> Option<&str> {
        self.last_id.as_deref()
    }

    /// Send one prompt. The exchange, failed or not, reaches the sink first.
    pub fn request(&mut self, prompt: &str, settings: &LlmSettings) -> Result<LlmExchange, LlmError> {
        if self.state.seq >= self.budget {
            return Err(LlmError::BudgetExhausted(self.budget));
        }
        self.state.seq += 1;
        let result = self.provider.complete(prompt, settings, &mut self.state);
        let (response, error) = match &result {
            Ok(r) => (r.clone(), None),
            Err(e) => (String::new(), Some(e.to_string())),
        };
        let exchange = LlmExchange {
            id: format!("{}-{:04}", self.label, self.state.seq),
            prompt: prompt.to_string(),
            extracted_code: if error.is_none() { extract_code(&response).ok() } else { None },
            response,
            settings: settings.clone(),
            provider: self.provider.name(),
            timestamp: self.provider.timestamp(&self.state),
            error,
        };
        self.last_id = Some(exchange.id.clone());
        if let Some(sink) = self.sink.as_mut() {
            sink.record(&exchange)?;
        }
        result.map(|_| exchange)
    }
}

/// Pull code out of a model response: the first fenced block, else the
/// whole response when it reads as C.
pub fn extract_code(response: &str) -> Result<String, LlmError> {
    if let Some(open) = response.find("```") {
        let after = &response[open + 3..];
        let body_start = after.find('\n').map(|p| p + 1).unwrap_or(after.len());
        let body = &after[body_start..];
        let body = match body.find("```") {
            Some(close) => &body[..close],
            None => body,
        };
        let body = body.strip_suffix('\n').unwrap_or(body);
        let body = body.strip_suffix('\r').unwrap_or(body);
        if body.trim().is_empty() {
            return Err(LlmError::NoCodeFound);
        }
        return Ok(body.to_string());
    }
    if looks_like_c(response) {
        return Ok(response.to_string());
    }
    Err(LlmError::NoCodeFound)
}

fn looks_like_c(text: &str) -> bool {
    match parse_unit(text) {
        Ok(u) => {
            !u.items.is_empty()
                && u.items.iter().any(|i| i.kind != ItemKind::Directive)
                && u.items.iter().all(|i| i.kind != ItemKind::Other)
        }
        Err(_) => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrectiveKind {
    CompileError,
    KatMismatch,
    SynthError,
}

impl CorrectiveKind {
    pub fn template(self) -> TemplateId {
        match self {
            CorrectiveKind::CompileError => TemplateId::CorrectiveCompile,
            CorrectiveKind::KatMismatch => TemplateId::CorrectiveKat,
            CorrectiveKind::SynthError => TemplateId::CorrectiveSynth,
        }
    }
}

pub const TRUNCATION_MARKER: &str = "[... evidence truncated ...]";
/// Rough characters-per-token ratio used to budget prompt length.
const CHARS_PER_TOKEN: usize = 4;
/// Evidence kept even when the code alone fills the budget.
const MIN_EVIDENCE: usize = 512;

/// Prompt feeding tool output back to the model. Evidence is embedded
/// verbatim, cut from the tail if the prompt would exceed `max_tokens`.
pub fn corrective_prompt(
    templates: &PromptSet,
    kind: CorrectiveKind,
    code: &str,
    evidence: &str,
    max_tokens: u32,
) -> Result<String, LlmError> {
    let id = kind.template();
    let skeleton = templates.render(id, &bindings([("code", code), ("evidence", "")]))?;
    let limit = max_tokens as usize * CHARS_PER_TOKEN;
    let room = limit.saturating_sub(skeleton.len()).max(MIN_EVIDENCE);
    let evidence = if evidence.len() <= room {
        evidence.to_string()
    } else {
        let mut cut = room.saturating_sub(TRUNCATION_MARKER.len() + 1);
        while !evidence.is_char_boundary(cut) {
            cut -= 1;
        }
        format!("{}\n{TRUNCATION_MARKER}", &evidence[..cut])
    };
    templates.render(id, &bindings([("code", code), ("evidence", &evidence)]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmConfig {
    /// Chat-completion URL of a live provider.
    pub endpoint: Option<String>,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub credential_env: String,
    pub mock_script: Option<PathBuf>,
    pub prompt_dir: Option<PathBuf>,
    pub budget: u32,
    pub retries: u32,
    pub timeout_secs: u64,
    pub temperature: f64,
    pub nucleus: f64,
    pub max_tokens: u32,
    /// Optional model override for the DSE phase.
    pub dse_model: Option<String>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        let s = LlmSettings::default();
        LlmConfig {
            endpoint: None,
            model: "mock".to_string(),
            credential_env: "PQC2HLS_API_KEY".to_string(),
            mock_script: None,
            prompt_dir: None,
            budget: 25,
            retries: 2,
            timeout_secs: 120,
            temperature: s.temperature,
            nucleus: s.nucleus,
            max_tokens: s.max_tokens,
            dse_model: None,
        }
    }
}

impl LlmConfig {
    pub fn settings(&self) -> LlmSettings {
        LlmSettings {
            temperature: self.temperature,
            nucleus: self.nucleus,
            max_tokens: self.max_tokens,
            model_id: self.model.clone(),
        }
    }

    pub fn dse_settings(&self) -> LlmSettings {
        let mut s = self.settings();
        if let Some(m) = &self.dse_model {
            s.model_id = m.clone();
        }
        s
    }

    /// Mock script wins over a live endpoint. Relative paths resolve
    /// against `base`.
    pub fn provider(&self, base: &Path) -> Result<Option<ProviderHandle>, LlmError> {
        if let Some(p) = &self.mock_script {
            let p = if p.is_absolute() { p.clone() } else { base.join(p) };
            return Ok(Some(Arc::new(MockProvider::from_file(&p)?)));
        }
        if let Some(url) = &self.endpoint {
            let live = LiveProvider::new(url, &self.credential_env, self.retries, std::time::Duration::from_secs(self.timeout_secs));
            return Ok(Some(Arc::new(live)));
        }
        Ok(None)
    }

    pub fn prompts(&self, base: &Path) -> Result<PromptSet, LlmError> {
        let dir = self.prompt_dir.as_ref().map(|d| if d.is_absolute() { d.clone() } else { base.join(d) });
        PromptSet::load(dir.as_deref())
    }
}
