//! Per-attempt records and their on-disk store.
//!
//! Layout under an attempt directory:
//! `transcript.json`, `code/<sha256>.c` for every code version and
//! `llm/NNNN.json` for every LLM exchange.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::LoopError;
use crate::blockers::unit_digest;
use crate::llm::{ExchangeSink, LlmError, LlmExchange, LlmSession};
use crate::synth::PpaMetrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageKind {
    Compile,
    KatSim,
    HlsSynth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub kind: StageKind,
    pub code_digest: String,
    pub passed: bool,
    pub summary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass(PpaMetrics),
    Fail(String),
}

impl Outcome {
    pub fn is_pass(&self) -> bool {
        matches!(self, Outcome::Pass(_))
    }

    pub fn metrics(&self) -> Option<&PpaMetrics> {
        match self {
            Outcome::Pass(m) => Some(m),
            Outcome::Fail(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTranscript {
    pub attempt_id: String,
    pub stages: Vec<StageRecord>,
    pub compile_runs: u32,
    pub hls_runs: u32,
    pub llm_exchanges: Vec<String>,
    pub outcome: Outcome,
    pub wall_seconds: f64,
    #[serde(default)]
    pub iterations: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Digest of the code version the outcome refers to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_digest: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub cancelled: bool,
    /// Pragma candidates evaluated after a pass, as `plan -> metrics`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dse: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dse_best: Option<String>,
}

impl RunTranscript {
    pub fn new(attempt_id: &str) -> Self {
        RunTranscript {
            attempt_id: attempt_id.to_string(),
            stages: Vec::new(),
            compile_runs: 0,
            hls_runs: 0,
            llm_exchanges: Vec::new(),
            outcome: Outcome::Fail("not run".to_string()),
            wall_seconds: 0.0,
            iterations: 0,
            warnings: Vec::new(),
            final_digest: None,
            cancelled: false,
            dse: Vec::new(),
            dse_best: None,
        }
    }

    /// Counter soundness and stage ordering; the first violation found.
    pub fn check(&self) -> Result<(), String> {
        let count = |k: StageKind| self.stages.iter().filter(|s| s.kind == k).count() as u32;
        if self.compile_runs != count(StageKind::Compile) {
            return Err(format!(
                "compile_runs is {} but {} Compile records exist",
                self.compile_runs,
                count(StageKind::Compile)
            ));
        }
        if self.hls_runs != count(StageKind::HlsSynth) {
            return Err(format!("hls_runs is {} but {} HlsSynth records exist", self.hls_runs, count(StageKind::HlsSynth)));
        }
        if self.compile_runs < self.hls_runs {
            return Err(format!("compile_runs {} < hls_runs {}", self.compile_runs, self.hls_runs));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if !s.passed && s.evidence.as_deref().is_none_or(|e| e.trim().is_empty()) {
                return Err(format!("stage {i} failed without evidence"));
            }
            if s.kind != StageKind::HlsSynth {
                continue;
            }
            let before = &self.stages[..i];
            let ok = |k: StageKind| before.iter().any(|p| p.kind == k && p.passed && p.code_digest == s.code_digest);
            if !ok(StageKind::Compile) || !ok(StageKind::KatSim) {
                return Err(format!("stage {i}: synthesis of {} without a passing compile and KAT run", &s.code_digest[..12]));
            }
        }
        if let Outcome::Pass(_) = &self.outcome {
            let last_synth = self.stages.iter().rev().find(|s| s.kind == StageKind::HlsSynth);
            if !last_synth.is_some_and(|s| s.passed) {
                return Err("pass outcome without a successful synthesis".to_string());
            }
        }
        Ok(())
    }
}

/// Writes exchanges as `llm/NNNN.json`.
struct DirSink {
    dir: PathBuf,
    n: u32,
}

impl ExchangeSink for DirSink {
    fn record(&mut self, exchange: &LlmExchange) -> Result<(), LlmError> {
        self.n += 1;
        std::fs::create_dir_all(&self.dir).map_err(|e| LlmError::Io(format!("{}: {e}", self.dir.display())))?;
        let p = self.dir.join(format!("{:04}.json", self.n));
        let text = serde_json::to_string_pretty(exchange).expect("exchange serializes") + "\n";
        std::fs::write(&p, text).map_err(|e| LlmError::Io(format!("{}: {e}", p.display())))
    }
}

/// State of one attempt: its directory, transcript and LLM session.
pub struct Attempt {
    pub dir: PathBuf,
    pub transcript: RunTranscript,
    pub session: Option<LlmSession>,
    started: Instant,
    scratch: u32,
}

impl Attempt {
    pub fn new(id: &str, dir: &Path, session: Option<LlmSession>) -> Result<Self, LoopError> {
        std::fs::create_dir_all(dir.join("code")).map_err(|e| LoopError::Io(format!("{}: {e}", dir.display())))?;
        let session = session.map(|mut s| {
            s.set_sink(Box::new(DirSink { dir: dir.join("llm"), n: 0 }));
            s
        });
        Ok(Attempt {
            dir: dir.to_path_buf(),
            transcript: RunTranscript::new(id),
            session,
            started: Instant::now(),
            scratch: 0,
        })
    }

    /// Fresh scratch directory for one build or synthesis.
    pub fn scratch(&mut self, what: &str) -> PathBuf {
        self.scratch += 1;
        self.dir.join("work").join(format!("{:03}-{what}", self.scratch))
    }

    /// Store a code version; returns its digest.
    pub fn store_code(&self, code: &str) -> Result<String, LoopError> {
        let d = unit_digest(code);
        let p = self.dir.join("code").join(format!("{d}.c"));
        if !p.exists() {
            std::fs::write(&p, code).map_err(|e| LoopError::Io(format!("{}: {e}", p.display())))?;
        }
        Ok(d)
    }

    pub fn record(&mut self, rec: StageRecord) {
        match rec.kind {
            StageKind::Compile => self.transcript.compile_runs += 1,
            StageKind::HlsSynth => self.transcript.hls_runs += 1,
            StageKind::KatSim => {}
        }
        self.transcript.stages.push(rec);
    }

    pub fn warn(&mut self, msg: String) {
        log::warn!("{}: {msg}", self.transcript.attempt_id);
        self.transcript.warnings.push(msg);
    }

    pub fn note_exchange(&mut self, id: &str) {
        self.transcript.llm_exchanges.push(id.to_string());
    }

    /// Stamp the wall time and write `transcript.json`.
    pub fn finish(&mut self, deterministic: bool) -> Result<RunTranscript, LoopError> {
        self.transcript.wall_seconds = if deterministic { 0.0 } else { self.started.elapsed().as_secs_f64() };
        let p = self.dir.join("transcript.json");
        let text = serde_json::to_string_pretty(&self.transcript).expect("transcript serializes") + "\n";
        std::fs::write(&p, text).map_err(|e| LoopError::Io(format!("{}: {e}", p.display())))?;
        Ok(self.transcript.clone())
    }
}

pub fn load_transcript(path: &Path) -> Result<RunTranscript, LoopError> {
    let text = std::fs::read_to_string(path).map_err(|e| LoopError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| LoopError::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(kind: StageKind, d: &str, passed: bool) -> StageRecord {
        StageRecord {
            kind,
            code_digest: d.repeat(16),
            passed,
            summary: String::new(),
            evidence: (!passed).then(|| "boom".to_string()),
        }
    }

    fn t(stages: Vec<StageRecord>) -> RunTranscript {
        let mut r = RunTranscript::new("a");
        r.compile_runs = stages.iter().filter(|s| s.kind == StageKind::Compile).count() as u32;
        r.hls_runs = stages.iter().filter(|s| s.kind == StageKind::HlsSynth).count() as u32;
        r.stages = stages;
        r
    }

    #[test]
    fn ordering_enforced() {
        let good = t(vec![rec(StageKind::Compile, "a", true), rec(StageKind::KatSim, "a", true), rec(StageKind::HlsSynth, "a", true)]);
        assert!(good.check().is_ok());
        let bad = t(vec![rec(StageKind::Compile, "a", true), rec(StageKind::KatSim, "b", true), rec(StageKind::HlsSynth, "a", true)]);
        assert!(bad.check().is_err());
    }

    #[test]
    fn counters_enforced() {
        let mut r = t(vec![rec(StageKind::Compile, "a", false)]);
        assert!(r.check().is_ok());
        r.compile_runs = 2;
        assert!(r.check().unwrap_err().contains("compile_runs"));
    }
}
