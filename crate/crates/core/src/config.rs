//! TOML configuration file shared by every subcommand.
//!
//! All sections are optional and every key has a default, so an empty file
//! is a valid configuration. Unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blockers::BlockerConfig;
use crate::llm::LlmConfig;
use crate::orchestrator::{CampaignConfig, LoopConfig, Pipeline};
use crate::synth::SynthConfig;
use crate::verify::ToolchainConfig;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlockerSection {
    /// Math functions flagged in addition to the built-in list.
    pub extra_math_functions: Vec<String>,
}

impl BlockerSection {
    pub fn scanner(&self) -> BlockerConfig {
        let mut cfg = BlockerConfig::default();
        for f in &self.extra_math_functions {
            if !cfg.math_functions.contains(f) {
                cfg.math_functions.push(f.clone());
            }
        }
        cfg
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub toolchain: ToolchainConfig,
    pub llm: LlmConfig,
    pub synth: SynthConfig,
    #[serde(rename = "loop")]
    pub loop_: LoopConfig,
    pub campaign: CampaignConfig,
    pub blockers: BlockerSection,
    /// Directory relative paths in this file resolve against; not a key.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl Config {
    pub fn from_toml(text: &str, origin: &str) -> Result<Config, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            msg: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Config, ConfigError> {
        let Some(path) = path else { return Ok(Config::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let mut cfg = Config::from_toml(&text, &path.display().to_string())?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.toolchain.validate().map_err(|e| ConfigError::Invalid(format!("toolchain: {e}")))?;
        self.llm.settings().validate().map_err(|e| ConfigError::Invalid(format!("llm: {e}")))?;
        crate::synth::validate_dialect(&self.synth.dialect)
            .map_err(|e| ConfigError::Invalid(format!("synth.dialect: {e}")))?;
        if self.synth.slots == 0 {
            return Err(ConfigError::Invalid("synth.slots must be at least 1".into()));
        }
        if self.loop_.max_iterations == 0 {
            return Err(ConfigError::Invalid("loop.max_iterations must be at least 1".into()));
        }
        if self.campaign.parallel == 0 {
            return Err(ConfigError::Invalid("campaign.parallel must be at least 1".into()));
        }
        Ok(())
    }

    /// Instantiate the backend, provider and prompts this file describes.
    pub fn pipeline(&self) -> Result<Pipeline, ConfigError> {
        let base = &self.base_dir;
        let backend = self.synth.backend(base).map_err(|e| ConfigError::Invalid(format!("synth: {e}")))?;
        let provider = self.llm.provider(base).map_err(|e| ConfigError::Invalid(format!("llm: {e}")))?;
        let prompts = self.llm.prompts(base).map_err(|e| ConfigError::Invalid(format!("llm.prompt_dir: {e}")))?;
        let mut p = Pipeline::new(self.toolchain.clone()).with_backend(backend);
        p.provider = provider;
        p.prompts = prompts;
        p.llm = self.llm.clone();
        p.cfg = self.loop_.clone();
        p.pragmas = self.synth.pragmas.clone();
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        let c = Config::from_toml("", "x.toml").unwrap();
        assert_eq!(c.loop_.max_iterations, 12);
        assert_eq!(c.loop_.retries_per_step, 3);
        assert_eq!(c.llm.budget, 25);
        assert_eq!(c.campaign.parallel, 1);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = Config::from_toml("[loop]\nmax_iteratons = 3\n", "x.toml").unwrap_err();
        assert!(e.to_string().contains("max_iteratons"), "{e}");
        let e = Config::from_toml("[bogus]\n", "x.toml").unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
    }

    #[test]
    fn sections_parse() {
        let c = Config::from_toml(
            "[loop]\nmax_iterations = 4\nobjective = \"latency\"\n[campaign]\nruns = 3\nparallel = 2\n[synth]\nbackend = \"mock\"\n",
            "x.toml",
        )
        .unwrap();
        assert_eq!(c.loop_.max_iterations, 4);
        assert_eq!(c.campaign.parallel, 2);
    }

    #[test]
    fn zero_parallel_rejected() {
        assert!(Config::from_toml("[campaign]\nparallel = 0\n", "x.toml").is_err());
    }
}
