//! Compile, KAT-simulate, synthesize; feed failures back to the LLM.

use super::{ask, ask_fix, check_code, synth_stage, Attempt, Checked, Kernel, LoopError, Outcome, Pipeline, Reply};
use crate::blockers::scan;
use crate::csrc::{parse_unit, SourceUnit};
use crate::llm::{bindings, CorrectiveKind, TemplateId};
use crate::synth::{Objective, SynthStatus};
use crate::xform::{apply, flatten_aggregates};

/// Function handed to synthesis: the flattened `<top>_hls` when present.
pub fn synth_top(unit: &SourceUnit, top: &str) -> String {
    let hls = format!("{top}_hls");
    if unit.function(&hls).is_some() {
        hls
    } else {
        top.to_string()
    }
}

fn needs_flattening(unit: &SourceUnit, top: &str) -> bool {
    let Some(f) = unit.function(top) else { return false };
    unit.function(&format!("{top}_hls")).is_none() && f.params.iter().any(|p| p.is_aggregate || p.is_opaque_pointer())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conversion {
    pub outcome: Outcome,
    /// The kernel with the passing code version, when the run passed.
    pub kernel: Option<Kernel>,
}

/// Flatten aggregate interfaces: the deterministic rewrite first, the
/// struct-expansion prompt when that fails.
fn flatten(p: &Pipeline, kernel: &Kernel, code: &str, attempt: &mut Attempt) -> Result<Option<String>, String> {
    let Ok(unit) = parse_unit(code) else { return Ok(None) };
    if !needs_flattening(&unit, &kernel.top_fn) {
        return Ok(None);
    }
    let err = match flatten_aggregates(&unit, &kernel.top_fn).and_then(|patch| apply(&unit, &patch)) {
        Ok(u) if u.text() != code => return Ok(Some(u.render())),
        Ok(_) => return Ok(None),
        Err(e) => e,
    };
    attempt.warn(format!("flatten_aggregates: {err}; asking the LLM"));
    let prompt = p
        .prompts
        .render(TemplateId::StructExpansion, &bindings([("top", kernel.top_fn.as_str()), ("code", code)]))
        .map_err(|e| e.to_string())?;
    match ask(p, attempt, &prompt) {
        Reply::Code(c) => Ok(Some(c)),
        Reply::NoCode => Ok(None),
        Reply::Stop(why) => Err(why),
    }
}

/// The staged loop. Never fails on the code's account: every failure mode
/// ends up as a `Fail` outcome in the transcript.
pub fn convert(p: &Pipeline, kernel: &Kernel, objective: Objective, attempt: &mut Attempt) -> Result<Conversion, LoopError> {
    let mut code = kernel.unit.render();
    let max = p.cfg.max_iterations;
    let rejected = p.backend.rejected_categories();
    let fail = |reason: String| Ok(Conversion { outcome: Outcome::Fail(reason), kernel: None });
    for iter in 1..=max {
        if p.cancelled() {
            attempt.transcript.cancelled = true;
            return fail("cancelled".to_string());
        }
        attempt.transcript.iterations = iter;
        match flatten(p, kernel, &code, attempt) {
            Ok(Some(c)) => code = c,
            Ok(None) => {}
            Err(why) => return fail(why),
        }
        let (kind, evidence) = match check_code(p, kernel, &code, attempt)? {
            Checked::Failed { kind, evidence } => (kind, evidence),
            Checked::Passed { unit, digest } => {
                let r = synth_stage(p, kernel, &unit, &digest, objective, attempt)?;
                match r.status {
                    SynthStatus::Success(m) => {
                        let report = scan(&unit);
                        let left: Vec<String> = rejected
                            .iter()
                            .filter(|c| report.count(**c) > 0)
                            .map(|c| format!("{} blockers remain", c.as_str()))
                            .collect();
                        if left.is_empty() {
                            attempt.transcript.final_digest = Some(digest);
                            return Ok(Conversion { outcome: Outcome::Pass(m), kernel: Some(kernel.with_unit(*unit)) });
                        }
                        (CorrectiveKind::SynthError, left.join("\n"))
                    }
                    SynthStatus::ToolError(t) | SynthStatus::TimingFailure(t) => (CorrectiveKind::SynthError, t),
                }
            }
        };
        if iter == max {
            break;
        }
        match ask_fix(p, attempt, kind, &code, &evidence)? {
            Reply::Code(c) => code = c,
            Reply::NoCode => attempt.warn(format!("iteration {iter}: LLM reply held no code")),
            Reply::Stop(why) => return fail(why),
        }
    }
    fail("budget exhausted".to_string())
}
