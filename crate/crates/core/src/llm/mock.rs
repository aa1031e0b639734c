//! Scripted offline provider.
//!
//! Script format (JSON):
//! `{"responses": {"<sha256 hex prefix>": "text", ...}, "fallback": ["text", ...]}`.
//! A prompt is answered by the entry whose key is the longest prefix of the
//! prompt's SHA-256; otherwise by the next fallback entry, the last one
//! repeating once the list runs out.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CallState, LlmError, LlmSettings, Provider};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default)]
    pub responses: BTreeMap<String, String>,
    #[serde(default)]
    pub fallback: Vec<String>,
}

impl MockScript {
    pub fn always(text: &str) -> Self {
        MockScript { responses: BTreeMap::new(), fallback: vec![text.to_string()] }
    }

    pub fn sequence<I: IntoIterator<Item = S>, S: Into<String>>(texts: I) -> Self {
        MockScript { responses: BTreeMap::new(), fallback: texts.into_iter().map(Into::into).collect() }
    }

    pub fn respond_to(mut self, prompt: &str, text: &str) -> Self {
        self.responses.insert(prompt_digest(prompt), text.to_string());
        self
    }
}

pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone)]
pub struct MockProvider {
    script: MockScript,
}

impl MockProvider {
    pub fn new(script: MockScript) -> Self {
        let responses = script.responses.into_iter().map(|(k, v)| (k.to_ascii_lowercase(), v)).collect();
        MockProvider { script: MockScript { responses, fallback: script.fallback } }
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        let script: MockScript =
            serde_json::from_str(&text).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        Ok(MockProvider::new(script))
    }

    fn lookup(&self, digest: &str) -> Option<&String> {
        self.script
            .responses
            .iter()
            .filter(|(k, _)| !k.is_empty() && digest.starts_with(k.as_str()))
            .max_by_key(|(k, _)| k.len())
            .map(|(_, v)| v)
    }
}

impl Provider for MockProvider {
    fn name(&self) -> String {
        "mock".to_string()
    }

    fn complete(&self, prompt: &str, _settings: &LlmSettings, state: &mut CallState) -> Result<String, LlmError> {
        if let Some(r) = self.lookup(&prompt_digest(prompt)) {
            return Ok(r.clone());
        }
        let fb = &self.script.fallback;
        if fb.is_empty() {
            return Err(LlmError::ProviderUnavailable("mock script has no entry for this prompt".to_string()));
        }
        let r = fb[state.fallback_cursor.min(fb.len() - 1)].clone();
        state.fallback_cursor += 1;
        Ok(r)
    }

    fn timestamp(&self, state: &CallState) -> String {
        format!("t+{}", state.seq)
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}
