//! The agentic loop: extraction, preprocessing, staged conversion, pragma
//! exploration and multi-run campaigns.

mod campaign;
mod convert;
mod dse;
mod kernel;
mod preprocess;
mod transcript;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use campaign::{campaign, fmt_num, AttemptSummary, CampaignConfig, CampaignResult, CampaignStats, Triple};
pub use convert::{convert, synth_top, Conversion};
pub use dse::{dse, enumerate_plans, parse_plan, select_best, Candidate, CandidateSource, DseResult};
pub use kernel::{amalgamate, extract_kernel, ExtractionAssist, Kernel, KernelManifest};
pub use preprocess::{preprocess, PreprocessReport, StepReport, StepStatus};
pub use transcript::{load_transcript, Attempt, Outcome, RunTranscript, StageKind, StageRecord};

use crate::csrc::{parse_unit, CsrcError, SourceUnit};
use crate::llm::{
    corrective_prompt, CorrectiveKind, LlmConfig, LlmError, LlmSession, LlmSettings, PromptSet, ProviderHandle,
};
use crate::synth::{synthesize, BackendHandle, MockBackend, Objective, SynthError, SynthResult, SynthStatus};
use crate::verify::{build_with_harness, run_kats, BuildResult, ToolchainConfig, VerifyError};
use crate::xform::{PragmaDialect, XformError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LoopError {
    #[error(transparent)]
    Source(#[from] CsrcError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Xform(#[from] XformError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("reference implementation fails its own KATs: {0}")]
    KernelSelfTestFailed(String),
    #[error("mandatory preprocessing step `{0}` could not be applied")]
    PreprocessExhausted(String),
    #[error("no pragma plan synthesized successfully")]
    NoViableCandidate,
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DseConfig {
    /// Run exploration after a passing conversion.
    pub enabled: bool,
    /// Maximum candidates, baseline included.
    pub budget: usize,
    /// LLM-proposed plans tried after the grid.
    pub llm_proposals: usize,
}

impl Default for DseConfig {
    fn default() -> Self {
        DseConfig { enabled: false, budget: 16, llm_proposals: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    pub max_iterations: u32,
    pub retries_per_step: u32,
    /// Run preprocessing inside every attempt.
    pub preprocess: bool,
    /// Extents for pointer parameters, keyed `function.param`.
    pub pointer_extents: BTreeMap<String, u64>,
    pub objective: Objective,
    /// LLM rounds allowed for missing dependencies during extraction; 0 disables.
    pub extraction_rounds: u32,
    pub dse: DseConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            max_iterations: 12,
            retries_per_step: 3,
            preprocess: false,
            pointer_extents: BTreeMap::new(),
            objective: Objective::Area,
            extraction_rounds: 0,
            dse: DseConfig::default(),
        }
    }
}

/// Everything an attempt needs besides its kernel.
#[derive(Clone)]
pub struct Pipeline {
    pub toolchain: ToolchainConfig,
    pub backend: BackendHandle,
    pub provider: Option<ProviderHandle>,
    pub prompts: PromptSet,
    pub llm: LlmConfig,
    pub cfg: LoopConfig,
    pub pragmas: PragmaDialect,
    pub cancel: Arc<AtomicBool>,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("backend", &self.backend.name())
            .field("provider", &self.provider.as_ref().map(|p| p.name()))
            .field("cfg", &self.cfg)
            .finish()
    }
}

impl Pipeline {
    /// Mock backend, no LLM, default budgets.
    pub fn new(toolchain: ToolchainConfig) -> Self {
        Pipeline {
            toolchain,
            backend: Arc::new(MockBackend::default()),
            provider: None,
            prompts: PromptSet::default(),
            llm: LlmConfig::default(),
            cfg: LoopConfig::default(),
            pragmas: PragmaDialect::default(),
            cancel: Arc::new(AtomicBool::new(false)),
        }
    }

    pub fn with_backend(mut self, backend: BackendHandle) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_provider(mut self, provider: ProviderHandle) -> Self {
        self.provider = Some(provider);
        self
    }

    pub fn session(&self, label: &str) -> Option<LlmSession> {
        self.provider.as_ref().map(|p| LlmSession::new(p.clone(), label, self.llm.budget))
    }

    pub fn settings(&self) -> LlmSettings {
        self.llm.settings()
    }

    /// Mock backend and mock (or no) provider: results are replayable.
    pub fn is_deterministic(&self) -> bool {
        self.backend.is_deterministic() && self.provider.as_ref().is_none_or(|p| p.is_deterministic())
    }

    pub fn cancelled(&self) -> bool {
        self.cancel.load(Ordering::SeqCst)
    }
}

/// Result of the compile and KAT stages on one code version.
pub(crate) enum Checked {
    Passed { unit: Box<SourceUnit>, digest: String },
    Failed { kind: CorrectiveKind, evidence: String },
}

fn failed(attempt: &mut Attempt, kind: StageKind, digest: &str, summary: &str, evidence: String) -> Checked {
    let evidence = if evidence.trim().is_empty() { summary.to_string() } else { evidence };
    attempt.record(StageRecord {
        kind,
        code_digest: digest.to_string(),
        passed: false,
        summary: summary.to_string(),
        evidence: Some(evidence.clone()),
    });
    let kind = if kind == StageKind::Compile { CorrectiveKind::CompileError } else { CorrectiveKind::KatMismatch };
    Checked::Failed { kind, evidence }
}

/// Compile `code` against the kernel harness, then replay its KATs.
pub(crate) fn check_code(p: &Pipeline, kernel: &Kernel, code: &str, attempt: &mut Attempt) -> Result<Checked, LoopError> {
    let digest = attempt.store_code(code)?;
    let unit = match parse_unit(code) {
        Ok(u) => u,
        Err(e) => return Ok(failed(attempt, StageKind::Compile, &digest, "parse error", format!("error: {e}"))),
    };
    let dir = attempt.scratch("compile");
    let built = match build_with_harness(&unit, &kernel.top_fn, &kernel.schema, &kernel.headers, &p.toolchain, &dir) {
        Ok(b) => b,
        Err(e @ (VerifyError::CompilerNotFound(_) | VerifyError::Config(_) | VerifyError::Io(_))) => return Err(e.into()),
        Err(e) => return Ok(failed(attempt, StageKind::Compile, &digest, "harness build failed", format!("error: {e}"))),
    };
    let binary = match built {
        BuildResult::Success { binary, .. } => binary,
        BuildResult::CompileFailed { stderr } => {
            return Ok(failed(attempt, StageKind::Compile, &digest, "compilation failed", stderr));
        }
    };
    attempt.record(StageRecord {
        kind: StageKind::Compile,
        code_digest: digest.clone(),
        passed: true,
        summary: "compiled".to_string(),
        evidence: None,
    });
    let outcome = match run_kats(&binary, &kernel.suite, p.toolchain.timeout()) {
        Ok(o) => o,
        Err(e) => return Ok(failed(attempt, StageKind::KatSim, &digest, "KAT execution failed", e.to_string())),
    };
    let n = kernel.suite.len();
    if let Some(m) = &outcome.first_mismatch {
        let evidence = format!(
            "{} of {n} KAT cases failed.\nFirst mismatch: case {}, field {}\nexpected: {}\nactual:   {}",
            outcome.failed, m.case, m.field, m.expected, m.actual
        );
        return Ok(failed(attempt, StageKind::KatSim, &digest, &format!("{} of {n} KATs failed", outcome.failed), evidence));
    }
    attempt.record(StageRecord {
        kind: StageKind::KatSim,
        code_digest: digest.clone(),
        passed: true,
        summary: format!("{} of {n} KATs passed", outcome.passed),
        evidence: None,
    });
    Ok(Checked::Passed { unit: Box::new(unit), digest })
}

/// Synthesize a checked code version and record the stage.
pub(crate) fn synth_stage(
    p: &Pipeline,
    kernel: &Kernel,
    unit: &SourceUnit,
    digest: &str,
    objective: Objective,
    attempt: &mut Attempt,
) -> Result<SynthResult, LoopError> {
    let dir = attempt.scratch("synth");
    std::fs::create_dir_all(&dir).map_err(|e| LoopError::Io(format!("{}: {e}", dir.display())))?;
    for h in &kernel.headers {
        let hp = dir.join(&h.name);
        std::fs::write(&hp, &h.text).map_err(|e| LoopError::Io(format!("{}: {e}", hp.display())))?;
    }
    let top = synth_top(unit, &kernel.top_fn);
    let result = match synthesize(unit.text(), &top, p.backend.as_ref(), objective, &dir) {
        Ok(r) => r,
        Err(SynthError::Timeout(s)) => SynthResult {
            status: SynthStatus::ToolError(format!("synthesis timed out after {s} s")),
            log_path: dir.join("synth.log"),
            backend: p.backend.name(),
            duration_seconds: s as f64,
        },
        Err(e) => return Err(e.into()),
    };
    let (passed, summary, evidence) = match &result.status {
        SynthStatus::Success(m) => (true, format!("synthesized {top}: {}", metrics_line(m)), None),
        SynthStatus::ToolError(t) => (false, "synthesis failed".to_string(), Some(t.clone())),
        SynthStatus::TimingFailure(t) => (false, "timing not met".to_string(), Some(t.clone())),
    };
    attempt.record(StageRecord { kind: StageKind::HlsSynth, code_digest: digest.to_string(), passed, summary, evidence });
    Ok(result)
}

pub(crate) fn metrics_line(m: &crate::synth::PpaMetrics) -> String {
    let mut parts = Vec::new();
    if let Some(a) = m.area_um2 {
        parts.push(format!("area {}", fmt_num(a)));
    }
    if let Some(c) = m.cycle_count {
        parts.push(format!("cycles {c}"));
    }
    for (name, v) in [("LUTs", m.luts), ("FFs", m.ffs), ("DSPs", m.dsps), ("BRAMs", m.brams)] {
        if let Some(v) = v {
            parts.push(format!("{name} {v}"));
        }
    }
    if let Some(f) = m.freq_mhz {
        parts.push(format!("{} MHz", fmt_num(f)));
    }
    if let Some(l) = m.latency_us {
        parts.push(format!("{} us", fmt_num(l)));
    }
    parts.join(", ")
}

/// What an LLM round produced.
pub(crate) enum Reply {
    Code(String),
    NoCode,
    /// The session cannot serve further requests.
    Stop(String),
}

/// One LLM request with the exchange id noted in the transcript.
pub(crate) fn ask(p: &Pipeline, attempt: &mut Attempt, prompt: &str) -> Reply {
    ask_with(attempt, prompt, &p.settings())
}

pub(crate) fn ask_with(attempt: &mut Attempt, prompt: &str, settings: &LlmSettings) -> Reply {
    let Some(session) = attempt.session.as_mut() else {
        return Reply::Stop("no LLM provider configured".to_string());
    };
    let result = session.request(prompt, settings);
    if let Some(id) = session.last_exchange_id().map(str::to_string) {
        if !attempt.transcript.llm_exchanges.contains(&id) {
            attempt.note_exchange(&id);
        }
    }
    match result {
        Ok(ex) => match ex.extracted_code {
            Some(c) => Reply::Code(c),
            None => Reply::NoCode,
        },
        Err(e) => Reply::Stop(e.to_string()),
    }
}

/// Ask for a fix of `code` given tool `evidence`.
pub(crate) fn ask_fix(p: &Pipeline, attempt: &mut Attempt, kind: CorrectiveKind, code: &str, evidence: &str) -> Result<Reply, LoopError> {
    let prompt = corrective_prompt(&p.prompts, kind, code, evidence, p.llm.max_tokens)?;
    Ok(ask(p, attempt, &prompt))
}

