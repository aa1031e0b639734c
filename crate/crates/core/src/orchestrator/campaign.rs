//! Repeated independent attempts and their aggregate statistics.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{convert, dse, metrics_line, preprocess, Attempt, Kernel, LoopError, Outcome, Pipeline, RunTranscript};
use crate::synth::{Objective, PpaMetrics};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignConfig {
    pub runs: u32,
    /// Attempts run concurrently.
    pub parallel: usize,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig { runs: 10, parallel: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub avg: f64,
    pub min: f64,
    pub max: f64,
}

impl Triple {
    pub fn of(values: &[f64]) -> Option<Triple> {
        if values.is_empty() {
            return None;
        }
        let sum: f64 = values.iter().sum();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // clamp so rounding in the sum never puts avg outside [min, max]
        let avg = (sum / values.len() as f64).clamp(min, max);
        Some(Triple { avg, min, max })
    }

    pub fn cells(&self) -> [String; 3] {
        [fmt_num(self.avg), fmt_num(self.min), fmt_num(self.max)]
    }
}

/// Two decimals at most, trailing zeros dropped: 14.22, 2781.7, 10.
pub fn fmt_num(v: f64) -> String {
    let s = format!("{:.2}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Per-attempt facts the statistics are computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptSummary {
    pub attempt_id: String,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub compile_runs: u32,
    pub hls_runs: u32,
    pub iterations: u32,
    pub llm_requests: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<PpaMetrics>,
}

impl AttemptSummary {
    pub fn of(t: &RunTranscript) -> Self {
        AttemptSummary {
            attempt_id: t.attempt_id.clone(),
            passed: t.outcome.is_pass(),
            reason: match &t.outcome {
                Outcome::Fail(r) => Some(r.clone()),
                Outcome::Pass(_) => None,
            },
            compile_runs: t.compile_runs,
            hls_runs: t.hls_runs,
            iterations: t.iterations,
            llm_requests: t.llm_exchanges.len(),
            metrics: t.outcome.metrics().cloned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignStats {
    pub runs: usize,
    pub passes: usize,
    pub success_rate_pct: f64,
    pub compile_runs: Option<Triple>,
    pub hls_runs: Option<Triple>,
    pub area: Option<Triple>,
    pub cycles: Option<Triple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub luts: Option<Triple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ffs: Option<Triple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dsps: Option<Triple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brams: Option<Triple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freq_mhz: Option<Triple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_us: Option<Triple>,
}

impl CampaignStats {
    /// Run counters over all attempts; PPA triples over passing attempts.
    pub fn from_summaries(s: &[AttemptSummary]) -> Self {
        let passing: Vec<&PpaMetrics> = s.iter().filter(|a| a.passed).filter_map(|a| a.metrics.as_ref()).collect();
        let passes = s.iter().filter(|a| a.passed).count();
        let all = |f: fn(&AttemptSummary) -> u32| Triple::of(&s.iter().map(|a| f(a) as f64).collect::<Vec<_>>());
        let ppa = |f: fn(&PpaMetrics) -> Option<f64>| Triple::of(&passing.iter().filter_map(|m| f(m)).collect::<Vec<_>>());
        CampaignStats {
            runs: s.len(),
            passes,
            success_rate_pct: if s.is_empty() { 0.0 } else { 100.0 * passes as f64 / s.len() as f64 },
            compile_runs: all(|a| a.compile_runs),
            hls_runs: all(|a| a.hls_runs),
            area: ppa(|m| m.area_um2),
            cycles: ppa(|m| m.cycle_count.map(|c| c as f64)),
            luts: ppa(|m| m.luts.map(|v| v as f64)),
            ffs: ppa(|m| m.ffs.map(|v| v as f64)),
            dsps: ppa(|m| m.dsps.map(|v| v as f64)),
            brams: ppa(|m| m.brams.map(|v| v as f64)),
            freq_mhz: ppa(|m| m.freq_mhz),
            latency_us: ppa(|m| m.latency_us),
        }
    }

    pub fn from_transcripts(ts: &[RunTranscript]) -> Self {
        CampaignStats::from_summaries(&ts.iter().map(AttemptSummary::of).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub stats: CampaignStats,
    /// Completed attempts in attempt order; cancelled ones are left out.
    pub transcripts: Vec<RunTranscript>,
}

pub fn attempt_dir(campaign_dir: &Path, index: usize) -> PathBuf {
    campaign_dir.join("attempts").join(format!("attempt-{:03}", index + 1))
}

fn run_attempt(p: &Pipeline, kernel: &Kernel, objective: Objective, dir: &Path, id: &str) -> Result<RunTranscript, LoopError> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(|e| LoopError::Io(format!("{}: {e}", dir.display())))?;
    }
    let mut attempt = Attempt::new(id, dir, p.session(id))?;
    let result = (|| -> Result<(), LoopError> {
        let kernel = if p.cfg.preprocess {
            let (k, report) = preprocess(p, kernel, &mut attempt)?;
            log::info!("{id}: preprocessing applied {} step(s)", report.applied());
            k
        } else {
            kernel.clone()
        };
        let conv = convert(p, &kernel, objective, &mut attempt)?;
        attempt.transcript.outcome = conv.outcome;
        if let (true, Some(k)) = (p.cfg.dse.enabled, conv.kernel) {
            let r = dse(p, &k, objective, p.cfg.dse.budget, &mut attempt)?;
            for c in &r.candidates {
                let line = match c.result.metrics() {
                    Some(m) => format!("{} -> {}", c.plan.label(), metrics_line(m)),
                    None => format!("{} -> failed", c.plan.label()),
                };
                attempt.transcript.dse.push(line);
            }
            let best = r.best_candidate();
            attempt.transcript.dse_best = Some(best.plan.label());
            attempt.transcript.outcome = Outcome::Pass(best.result.metrics().cloned().unwrap_or_default());
        }
        Ok(())
    })();
    if let Err(e) = result {
        attempt.transcript.outcome = Outcome::Fail(e.to_string());
    }
    if p.cancelled() && !attempt.transcript.outcome.is_pass() {
        attempt.transcript.cancelled = true;
    }
    attempt.finish(p.is_deterministic())
}

/// Run `n_runs` independent attempts under `dir/attempts/`.
pub fn campaign(
    p: &Pipeline,
    kernel: &Kernel,
    n_runs: usize,
    parallel: usize,
    objective: Objective,
    dir: &Path,
) -> Result<CampaignResult, LoopError> {
    std::fs::create_dir_all(dir.join("attempts")).map_err(|e| LoopError::Io(format!("{}: {e}", dir.display())))?;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<RunTranscript, LoopError>>>> = Mutex::new(vec![None; n_runs]);
    let worker = || loop {
        if p.cancelled() {
            break;
        }
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= n_runs {
            break;
        }
        let id = format!("attempt-{:03}", i + 1);
        let r = run_attempt(p, kernel, objective, &attempt_dir(dir, i), &id);
        slots.lock().expect("results lock poisoned")[i] = Some(r);
    };
    std::thread::scope(|s| {
        for _ in 0..parallel.clamp(1, n_runs.max(1)) {
            s.spawn(worker);
        }
    });
    let mut transcripts = Vec::new();
    for r in slots.into_inner().expect("results lock poisoned").into_iter().flatten() {
        let t = r?;
        if !t.cancelled {
            transcripts.push(t);
        }
    }
    Ok(CampaignResult { stats: CampaignStats::from_transcripts(&transcripts), transcripts })
}
