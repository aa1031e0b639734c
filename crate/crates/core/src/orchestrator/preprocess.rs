//! Blocker removal ahead of conversion, verified after every step.

use serde::{Deserialize, Serialize};

use super::{ask, ask_fix, check_code, Attempt, Checked, Kernel, LoopError, Pipeline, Reply};
use crate::blockers::{is_init_function, scan, Category};
use crate::csrc::SourceUnit;
use crate::llm::{bindings, TemplateId};
use crate::verify::SourceFile;
use crate::xform::{apply, map_static_memory, pointers_to_arrays, remove_runtime_init, Patch, XformError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Applied,
    /// Tried, but the result never passed verification.
    Reverted,
    /// The transform itself could not be applied.
    Skipped,
    NotNeeded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: String,
    pub status: StepStatus,
    /// `rule:<name>` or `llm:<exchange id>` for every edit that was kept.
    pub provenance: Vec<String>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub steps: Vec<StepReport>,
}

impl PreprocessReport {
    pub fn applied(&self) -> usize {
        self.steps.iter().filter(|s| s.status == StepStatus::Applied).count()
    }
}

fn stem(name: &str) -> String {
    let s: String = name.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect();
    if s.starts_with(|c: char| c.is_ascii_digit()) || s.is_empty() {
        format!("k_{s}")
    } else {
        s
    }
}

fn last_llm(attempt: &Attempt) -> String {
    format!("llm:{}", attempt.transcript.llm_exchanges.last().map(String::as_str).unwrap_or("?"))
}

/// Verify `code`; on failure ask for corrections up to the retry budget.
fn settle(
    p: &Pipeline,
    candidate: &Kernel,
    mut code: String,
    attempt: &mut Attempt,
    provenance: &mut Vec<String>,
) -> Result<Option<SourceUnit>, LoopError> {
    let retries = p.cfg.retries_per_step;
    for round in 0..=retries {
        let (kind, evidence) = match check_code(p, candidate, &code, attempt)? {
            Checked::Passed { unit, .. } => return Ok(Some(*unit)),
            Checked::Failed { kind, evidence } => (kind, evidence),
        };
        if round == retries {
            break;
        }
        match ask_fix(p, attempt, kind, &code, &evidence)? {
            Reply::Code(c) => {
                provenance.push(last_llm(attempt));
                code = c;
            }
            Reply::NoCode => {}
            Reply::Stop(reason) => {
                attempt.warn(format!("corrective round stopped: {reason}"));
                break;
            }
        }
    }
    Ok(None)
}

fn rule(patch: &Patch) -> String {
    format!("{}", patch.provenance)
}

/// Map heap buffers to static storage, falling back to the LLM when sizes
/// are not compile-time constants.
fn static_memory_step(p: &Pipeline, k: &mut Kernel, attempt: &mut Attempt) -> Result<StepReport, LoopError> {
    let name = "map_static_memory";
    let report = |status, provenance, detail: String| StepReport { step: name.to_string(), status, provenance, detail };
    if scan(&k.unit).count(Category::DynamicMemory) == 0 {
        return Ok(report(StepStatus::NotNeeded, Vec::new(), "no dynamic memory".into()));
    }
    let mut provenance = Vec::new();
    let code = match map_static_memory(&k.unit) {
        Ok(patch) if patch.is_empty() => return Ok(report(StepStatus::Skipped, Vec::new(), patch.description)),
        Ok(patch) => {
            provenance.push(rule(&patch));
            apply(&k.unit, &patch)?.render()
        }
        Err(XformError::NotStaticallySizable(span)) => {
            let prompt = p.prompts.render(TemplateId::StaticMemory, &bindings([("code", k.unit.text())]))?;
            match ask(p, attempt, &prompt) {
                Reply::Code(c) => {
                    provenance.push(last_llm(attempt));
                    c
                }
                Reply::NoCode => {
                    return Ok(report(StepStatus::Skipped, Vec::new(), format!("size at {span} not static; no code in LLM reply")))
                }
                Reply::Stop(why) => {
                    return Ok(report(StepStatus::Skipped, Vec::new(), format!("size at {span} not static; {why}")))
                }
            }
        }
        Err(e) => return Ok(report(StepStatus::Skipped, Vec::new(), e.to_string())),
    };
    match settle(p, k, code, attempt, &mut provenance)? {
        Some(unit) if scan(&unit).count(Category::DynamicMemory) == 0 => {
            k.unit = unit;
            Ok(report(StepStatus::Applied, provenance, "heap buffers mapped to static storage".into()))
        }
        Some(_) => Ok(report(StepStatus::Reverted, provenance, "result still allocates dynamically".into())),
        None => Ok(report(StepStatus::Reverted, provenance, "result failed verification".into())),
    }
}

/// Replace every runtime initializer by precomputed constant tables.
fn init_steps(p: &Pipeline, k: &mut Kernel, attempt: &mut Attempt) -> Result<Vec<StepReport>, LoopError> {
    let mut reports = Vec::new();
    let mut tried: Vec<String> = Vec::new();
    let stem = stem(&k.name);
    loop {
        let next = k.unit.functions.iter().map(|f| f.name.clone()).find(|n| {
            !tried.contains(n) && *n != k.top_fn && is_init_function(&k.unit, n).map(|c| c.is_init).unwrap_or(false)
        });
        let Some(init) = next else { break };
        tried.push(init.clone());
        let step = format!("remove_runtime_init({init})");
        let header_name = format!("{stem}_consts.h");
        let existing = k.headers.iter().find(|h| h.name == header_name).map(|h| h.text.clone());
        let dir = attempt.scratch("init");
        let r = match remove_runtime_init(&k.unit, &init, &stem, existing.as_deref(), &p.toolchain, &dir) {
            Ok(r) => r,
            Err(e @ XformError::Verify(crate::verify::VerifyError::CompilerNotFound(_))) => return Err(e.into()),
            Err(e) => {
                reports.push(StepReport { step, status: StepStatus::Skipped, provenance: Vec::new(), detail: e.to_string() });
                continue;
            }
        };
        let mut candidate = k.clone();
        candidate.headers.retain(|h| h.name != r.header_name);
        candidate.headers.push(SourceFile::new(&r.header_name, r.header_text.clone()));
        let mut provenance = vec![rule(&r.patch)];
        let code = apply(&k.unit, &r.patch)?.render();
        let names: Vec<&str> = r.tables.iter().map(|t| t.name.as_str()).collect();
        match settle(p, &candidate, code, attempt, &mut provenance)? {
            Some(unit) => {
                candidate.unit = unit;
                *k = candidate;
                let detail = format!("tables {} written to {}", names.join(", "), r.header_name);
                reports.push(StepReport { step, status: StepStatus::Applied, provenance, detail });
            }
            None => reports.push(StepReport {
                step,
                status: StepStatus::Reverted,
                provenance,
                detail: "result failed verification".into(),
            }),
        }
    }
    if reports.is_empty() {
        reports.push(StepReport {
            step: "remove_runtime_init".into(),
            status: StepStatus::NotNeeded,
            provenance: Vec::new(),
            detail: "no runtime initializers".into(),
        });
    }
    Ok(reports)
}

fn pointer_step(p: &Pipeline, k: &mut Kernel, attempt: &mut Attempt) -> Result<StepReport, LoopError> {
    let step = format!("pointers_to_arrays({})", k.top_fn);
    let report = |status, provenance, detail: String| StepReport { step: step.clone(), status, provenance, detail };
    let patch = match pointers_to_arrays(&k.unit, &k.top_fn, &p.cfg.pointer_extents) {
        Ok(patch) if patch.is_empty() => return Ok(report(StepStatus::NotNeeded, Vec::new(), patch.description)),
        Ok(patch) => patch,
        Err(e) => return Ok(report(StepStatus::Skipped, Vec::new(), e.to_string())),
    };
    let mut provenance = vec![rule(&patch)];
    let code = apply(&k.unit, &patch)?.render();
    match settle(p, k, code, attempt, &mut provenance)? {
        Some(unit) => {
            k.unit = unit;
            Ok(report(StepStatus::Applied, provenance, "pointer parameters now fixed-extent arrays".into()))
        }
        None => Ok(report(StepStatus::Reverted, provenance, "result failed verification".into())),
    }
}

fn addressed(step: &str) -> &'static [Category] {
    if step.starts_with("map_static_memory") {
        &[Category::DynamicMemory]
    } else if step.starts_with("remove_runtime_init") {
        &[Category::RuntimeInit, Category::MathLibCall]
    } else {
        &[Category::PointerInterface]
    }
}

/// Static memory mapping, init removal, then pointer rewriting on the top
/// function. Each step is kept only if the kernel still passes its KATs.
pub fn preprocess(p: &Pipeline, kernel: &Kernel, attempt: &mut Attempt) -> Result<(Kernel, PreprocessReport), LoopError> {
    let mut k = kernel.clone();
    let mut report = PreprocessReport::default();
    report.steps.push(static_memory_step(p, &mut k, attempt)?);
    report.steps.extend(init_steps(p, &mut k, attempt)?);
    report.steps.push(pointer_step(p, &mut k, attempt)?);

    let rejected = p.backend.rejected_categories();
    let remaining = scan(&k.unit);
    for s in &report.steps {
        if !matches!(s.status, StepStatus::Reverted | StepStatus::Skipped) {
            continue;
        }
        if addressed(&s.step).iter().any(|c| rejected.contains(c) && remaining.count(*c) > 0) {
            return Err(LoopError::PreprocessExhausted(s.step.clone()));
        }
        attempt.warn(format!("{}: {}", s.step, s.detail));
    }
    Ok((k, report))
}

#[cfg(test)]
mod tests {
    use super::stem;

    #[test]
    fn header_stems() {
        assert_eq!(stem("Kyber-NTT"), "kyber_ntt");
        assert_eq!(stem("fft16"), "fft16");
        assert_eq!(stem("3x"), "k_3x");
    }
}
