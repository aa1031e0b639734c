//! Synthesis backends and report parsing.

mod external;
mod mock;
mod report;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use external::ExternalBackend;
pub use mock::{mock_cost, MockBackend, MockCost};
pub use report::{parse_report, validate_dialect, ReportDialect};

use crate::blockers::Category;
use crate::xform::PragmaDialect;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("synthesis backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("synthesis timed out after {0} s")]
    Timeout(u64),
    #[error("no metrics found in synthesis report")]
    NoMetricsFound,
    #[error("invalid report pattern for {field}: {reason}")]
    BadPattern { field: String, reason: String },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Area,
    Latency,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Area => "area",
            Objective::Latency => "latency",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PpaMetrics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_um2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub luts: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ffs: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dsps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brams: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freq_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_us: Option<f64>,
}

impl PpaMetrics {
    pub fn is_empty(&self) -> bool {
        *self == PpaMetrics::default()
    }

    /// Non-empty when latency disagrees with cycles / frequency by over 1%.
    pub fn consistency_warning(&self) -> Option<String> {
        let (c, f, l) = (self.cycle_count?, self.freq_mhz?, self.latency_us?);
        let expect = c as f64 / f;
        if expect == 0.0 && l == 0.0 {
            return None;
        }
        let rel = ((l - expect) / expect.abs().max(f64::MIN_POSITIVE)).abs();
        (rel > 0.01).then(|| format!("latency {l} us disagrees with {c} cycles at {f} MHz ({expect:.4} us)"))
    }

    /// Value minimized for `objective`; missing metrics rank last.
    pub fn objective_value(&self, objective: Objective) -> f64 {
        let v = match objective {
            Objective::Area => self.area_um2.or_else(|| self.luts.map(|l| l as f64)),
            Objective::Latency => self.cycle_count.map(|c| c as f64).or(self.latency_us),
        };
        v.unwrap_or(f64::INFINITY)
    }

    /// Value of the other objective, used to break ties.
    pub fn secondary_value(&self, objective: Objective) -> f64 {
        match objective {
            Objective::Area => self.objective_value(Objective::Latency),
            Objective::Latency => self.objective_value(Objective::Area),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthStatus {
    Success(PpaMetrics),
    ToolError(String),
    TimingFailure(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthResult {
    pub status: SynthStatus,
    pub log_path: PathBuf,
    pub backend: String,
    pub duration_seconds: f64,
}

impl SynthResult {
    pub fn metrics(&self) -> Option<&PpaMetrics> {
        match &self.status {
            SynthStatus::Success(m) => Some(m),
            _ => None,
        }
    }

    /// Diagnostic text for a failed run.
    pub fn failure_text(&self) -> Option<&str> {
        match &self.status {
            SynthStatus::Success(_) => None,
            SynthStatus::ToolError(t) | SynthStatus::TimingFailure(t) => Some(t),
        }
    }
}

/// Outcome reported by a backend before timing is attached.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendRun {
    pub status: SynthStatus,
    pub log_path: PathBuf,
}

pub trait SynthBackend: Send + Sync {
    fn name(&self) -> String;
    /// True when results are a pure function of the inputs.
    fn is_deterministic(&self) -> bool {
        false
    }
    fn run(&self, code: &str, top_fn: &str, objective: Objective, workdir: &Path) -> Result<BackendRun, SynthError>;
    /// Blocker categories this backend refuses to synthesize.
    fn rejected_categories(&self) -> Vec<Category> {
        Vec::new()
    }
}

pub type BackendHandle = Arc<dyn SynthBackend>;

/// Synthesize `code` with `top_fn` as the top-level function.
pub fn synthesize(
    code: &str,
    top_fn: &str,
    backend: &dyn SynthBackend,
    objective: Objective,
    workdir: &Path,
) -> Result<SynthResult, SynthError> {
    std::fs::create_dir_all(workdir).map_err(|e| SynthError::Io(format!("{}: {e}", workdir.display())))?;
    let t0 = Instant::now();
    let run = backend.run(code, top_fn, objective, workdir)?;
    let duration_seconds = if backend.is_deterministic() { 0.0 } else { t0.elapsed().as_secs_f64() };
    if let SynthStatus::Success(m) = &run.status {
        if let Some(w) = m.consistency_warning() {
            log::warn!("{w}");
        }
    }
    Ok(SynthResult { status: run.status, log_path: run.log_path, backend: backend.name(), duration_seconds })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub backend: BackendKind,
    /// Argument vector; `{code}`, `{workdir}`, `{objective}`, `{top}` and
    /// `{script}` are substituted.
    pub command_template: Vec<String>,
    /// Script file rendered with the same placeholders into the workdir.
    pub script_template: Option<PathBuf>,
    /// Report file relative to the workdir; the tool log when unset.
    pub report_file: Option<String>,
    pub dialect: ReportDialect,
    pub timeout_seconds: u64,
    pub slots: usize,
    pub pragmas: PragmaDialect,
    /// Blocker categories the external tool is known to reject.
    pub rejects: Vec<Category>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            backend: BackendKind::Mock,
            command_template: Vec::new(),
            script_template: None,
            report_file: None,
            dialect: ReportDialect::Asic,
            timeout_seconds: 3600,
            slots: 1,
            pragmas: PragmaDialect::default(),
            rejects: Vec::new(),
        }
    }
}

impl SynthConfig {
    /// Relative script paths resolve against `base`.
    pub fn backend(&self, base: &Path) -> Result<BackendHandle, SynthError> {
        match self.backend {
            BackendKind::Mock => Ok(Arc::new(MockBackend::new(self.pragmas.clone()))),
            BackendKind::External => {
                if self.command_template.is_empty() {
                    return Err(SynthError::BackendUnavailable("synth.command_template is empty".to_string()));
                }
                let mut cfg = self.clone();
                if let Some(s) = &cfg.script_template {
                    if s.is_relative() {
                        cfg.script_template = Some(base.join(s));
                    }
                }
                Ok(Arc::new(ExternalBackend::new(cfg)?))
            }
        }
    }
}
