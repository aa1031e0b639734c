//! Pragma design-space exploration.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{ask_with, check_code, metrics_line, synth_stage, synth_top, Attempt, Checked, Kernel, LoopError, Pipeline, Reply};
use crate::csrc::SourceUnit;
use crate::llm::{bindings, TemplateId};
use crate::synth::{Objective, SynthResult, SynthStatus};
use crate::xform::{apply, insert_pragmas, Action, Directive, PragmaPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    Grid,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub plan: PragmaPlan,
    pub source: CandidateSource,
    pub result: SynthResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DseResult {
    pub candidates: Vec<Candidate>,
    pub best: usize,
    pub objective: Objective,
}

impl DseResult {
    pub fn best_candidate(&self) -> &Candidate {
        &self.candidates[self.best]
    }
}

/// Loops open to pragmas: (function, index, trip count), in source order.
fn tunable_loops(unit: &SourceUnit, top: &str) -> Vec<(String, usize, u64)> {
    let Ok(closure) = unit.call_closure(top) else { return Vec::new() };
    let mut out = Vec::new();
    for f in &unit.functions {
        if !closure.functions.contains(&f.name) {
            continue;
        }
        for (i, l) in f.loops.iter().enumerate() {
            if let Some(t) = l.trip_count.filter(|t| *t > 1) {
                out.push((f.name.clone(), i, t));
            }
        }
    }
    out
}

/// Unroll factor for one grid setting; `None` means full unrolling.
fn factor(setting: Option<u64>, trip: u64) -> Option<u64> {
    match setting {
        None => Some(trip),
        Some(f) if f <= trip => Some(f),
        Some(_) => None,
    }
}

fn directives(function: &str, index: usize, unroll: u64, pipeline: bool) -> Vec<Directive> {
    let mut d = Vec::new();
    if unroll > 1 {
        d.push(Directive { function: function.to_string(), loop_index: index, action: Action::Unroll(unroll) });
    }
    if pipeline {
        d.push(Directive { function: function.to_string(), loop_index: index, action: Action::Pipeline(1) });
    }
    d
}

/// Grid over unroll {1, 2, 4, full} x pipeline {off, on}: baseline first,
/// then each setting applied to every loop, then per-loop settings.
pub fn enumerate_plans(unit: &SourceUnit, top: &str) -> Vec<PragmaPlan> {
    let loops = tunable_loops(unit, top);
    let settings: Vec<(Option<u64>, bool)> = [Some(1), Some(2), Some(4), None]
        .into_iter()
        .flat_map(|f| [(f, false), (f, true)])
        .filter(|&(f, p)| !(f == Some(1) && !p))
        .collect();
    let mut plans = vec![PragmaPlan::default()];
    let mut seen: BTreeSet<String> = BTreeSet::from([plans[0].label()]);
    let mut push = |plan: PragmaPlan, plans: &mut Vec<PragmaPlan>| {
        if !plan.is_empty() && seen.insert(plan.label()) {
            plans.push(plan);
        }
    };
    for &(f, p) in &settings {
        let mut plan = PragmaPlan::default();
        for (name, i, trip) in &loops {
            if let Some(u) = factor(f, *trip) {
                plan.directives.extend(directives(name, *i, u, p));
            }
        }
        push(plan, &mut plans);
    }
    if loops.len() > 1 {
        for (name, i, trip) in &loops {
            for &(f, p) in &settings {
                if let Some(u) = factor(f, *trip) {
                    push(PragmaPlan { directives: directives(name, *i, u, p) }, &mut plans);
                }
            }
        }
    }
    plans
}

/// Parse an LLM answer: lines `function#loop unroll=N pipeline=II`, or
/// `baseline`. Unknown loops make the whole answer invalid.
pub fn parse_plan(text: &str, unit: &SourceUnit) -> Option<PragmaPlan> {
    let body = crate::llm::extract_code(text).unwrap_or_else(|_| text.to_string());
    let mut plan = PragmaPlan::default();
    let mut any = false;
    for line in body.lines() {
        let line = line.trim().trim_start_matches(['-', '*']).trim().trim_matches('`');
        if line.eq_ignore_ascii_case("baseline") {
            any = true;
            continue;
        }
        let mut parts = line.split_whitespace();
        let Some(head) = parts.next() else { continue };
        let Some((func, idx)) = head.split_once('#') else { continue };
        let idx: usize = idx.parse().ok()?;
        let f = unit.function(func)?;
        f.loops.get(idx)?;
        for kv in parts {
            let (k, v) = kv.split_once('=')?;
            let v: u64 = v.parse().ok()?;
            let action = match k {
                "unroll" => Action::Unroll(v),
                "pipeline" => Action::Pipeline(v.max(1)),
                _ => return None,
            };
            plan.directives.push(Directive { function: func.to_string(), loop_index: idx, action });
        }
        any = true;
    }
    any.then_some(plan)
}

fn describe_loops(unit: &SourceUnit, top: &str) -> String {
    let lines: Vec<String> =
        tunable_loops(unit, top).iter().map(|(f, i, t)| format!("{f}#{i}: trip count {t}")).collect();
    if lines.is_empty() {
        "(none)".to_string()
    } else {
        lines.join("\n")
    }
}

fn history(cands: &[Candidate]) -> String {
    cands
        .iter()
        .map(|c| match &c.result.status {
            SynthStatus::Success(m) => format!("{} -> {}", c.plan.label(), metrics_line(m)),
            SynthStatus::ToolError(_) | SynthStatus::TimingFailure(_) => format!("{} -> failed", c.plan.label()),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn evaluate(
    p: &Pipeline,
    kernel: &Kernel,
    plan: &PragmaPlan,
    objective: Objective,
    attempt: &mut Attempt,
) -> Result<SynthResult, LoopError> {
    let fail = |text: String| SynthResult {
        status: SynthStatus::ToolError(text),
        log_path: Default::default(),
        backend: p.backend.name(),
        duration_seconds: 0.0,
    };
    let unit = match insert_pragmas(&kernel.unit, plan, &p.pragmas).and_then(|patch| apply(&kernel.unit, &patch)) {
        Ok(u) => u,
        Err(e) => return Ok(fail(format!("pragma insertion failed: {e}"))),
    };
    match check_code(p, kernel, unit.text(), attempt)? {
        Checked::Passed { unit, digest } => synth_stage(p, kernel, &unit, &digest, objective, attempt),
        Checked::Failed { evidence, .. } => Ok(fail(format!("plan {} broke verification:\n{evidence}", plan.label()))),
    }
}

/// Index of the best successful candidate: lowest objective, then lowest
/// secondary metric, then lowest index.
pub fn select_best(candidates: &[Candidate], objective: Objective) -> Option<usize> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let Some(m) = c.result.metrics() else { continue };
        let key = (m.objective_value(objective), m.secondary_value(objective));
        if best.is_none_or(|(_, a, b)| key.0 < a || (key.0 == a && key.1 < b)) {
            best = Some((i, key.0, key.1));
        }
    }
    best.map(|b| b.0)
}

/// Evaluate up to `budget` plans on a kernel whose code already passes.
pub fn dse(p: &Pipeline, kernel: &Kernel, objective: Objective, budget: usize, attempt: &mut Attempt) -> Result<DseResult, LoopError> {
    let top = synth_top(&kernel.unit, &kernel.top_fn);
    let budget = budget.max(1);
    let mut candidates = Vec::new();
    let mut seen = BTreeSet::new();
    for plan in enumerate_plans(&kernel.unit, &top).into_iter().take(budget) {
        if p.cancelled() {
            break;
        }
        seen.insert(plan.label());
        let result = evaluate(p, kernel, &plan, objective, attempt)?;
        candidates.push(Candidate { plan, source: CandidateSource::Grid, result });
    }
    let mut proposals = 0;
    while candidates.len() < budget && proposals < p.cfg.dse.llm_proposals && !p.cancelled() {
        proposals += 1;
        let prompt = p.prompts.render(
            TemplateId::PragmaDse,
            &bindings([
                ("objective", objective.to_string().as_str()),
                ("top", top.as_str()),
                ("loops", describe_loops(&kernel.unit, &top).as_str()),
                ("history", history(&candidates).as_str()),
                ("code", kernel.unit.text()),
            ]),
        )?;
        let text = match ask_with(attempt, &prompt, &p.llm.dse_settings()) {
            Reply::Code(c) => c,
            Reply::NoCode => continue,
            Reply::Stop(why) => {
                attempt.warn(format!("pragma proposals stopped: {why}"));
                break;
            }
        };
        let Some(plan) = parse_plan(&text, &kernel.unit) else { continue };
        if !seen.insert(plan.label()) {
            continue;
        }
        let result = evaluate(p, kernel, &plan, objective, attempt)?;
        candidates.push(Candidate { plan, source: CandidateSource::Llm, result });
    }
    let best = select_best(&candidates, objective).ok_or(LoopError::NoViableCandidate)?;
    Ok(DseResult { candidates, best, objective })
}
