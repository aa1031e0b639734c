//! Backend that shells out to a synthesis tool.

use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use super::report::validate_dialect;
use super::{parse_report, BackendRun, Objective, SynthBackend, SynthConfig, SynthError, SynthStatus};
use crate::process::{self, ProcError};

const TIMING_MARKER: &str = "TIMING: FAILED";
const LOG_TAIL_LINES: usize = 100;

/// Counting semaphore bounding concurrent tool runs.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn new(n: usize) -> Self {
        Slots { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slot lock poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("slot lock poisoned");
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("slot lock poisoned") += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug)]
pub struct ExternalBackend {
    cfg: SynthConfig,
    script: Option<String>,
    slots: Slots,
}

fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    vars.iter().fold(template.to_string(), |acc, (k, v)| acc.replace(&format!("{{{k}}}"), v))
}

fn tail(text: &str, n: usize) -> String {
    let lines: Vec<&str> = text.lines().collect();
    lines[lines.len().saturating_sub(n)..].join("\n")
}

impl ExternalBackend {
    pub fn new(cfg: SynthConfig) -> Result<Self, SynthError> {
        validate_dialect(&cfg.dialect)?;
        let script = match &cfg.script_template {
            Some(p) => Some(
                std::fs::read_to_string(p)
                    .map_err(|e| SynthError::BackendUnavailable(format!("script template {}: {e}", p.display())))?,
            ),
            None => None,
        };
        let slots = Slots::new(cfg.slots);
        Ok(ExternalBackend { cfg, script, slots })
    }
}

impl SynthBackend for ExternalBackend {
    fn name(&self) -> String {
        format!("external:{}", self.cfg.command_template.first().map(String::as_str).unwrap_or(""))
    }

    fn rejected_categories(&self) -> Vec<crate::blockers::Category> {
        self.cfg.rejects.clone()
    }

    fn run(&self, code: &str, top_fn: &str, objective: Objective, workdir: &Path) -> Result<BackendRun, SynthError> {
        let io = |p: &Path, e: std::io::Error| SynthError::Io(format!("{}: {e}", p.display()));
        let code_path = workdir.join(format!("{top_fn}.c"));
        std::fs::write(&code_path, code).map_err(|e| io(&code_path, e))?;
        let wd = workdir.to_string_lossy().into_owned();
        let cp = code_path.to_string_lossy().into_owned();
        let obj = objective.to_string();
        let mut vars = vec![("code", cp.as_str()), ("workdir", wd.as_str()), ("objective", obj.as_str()), ("top", top_fn)];
        let script_path = workdir.join("synth_script.tcl");
        let sp = script_path.to_string_lossy().into_owned();
        if let Some(s) = &self.script {
            std::fs::write(&script_path, fill(s, &vars)).map_err(|e| io(&script_path, e))?;
        }
        vars.push(("script", sp.as_str()));
        let argv: Vec<String> = self.cfg.command_template.iter().map(|a| fill(a, &vars)).collect();
        let (program, args) = argv.split_first().ok_or_else(|| SynthError::BackendUnavailable("empty command".into()))?;

        let out = {
            let _slot = self.slots.acquire();
            process::run(program, args, workdir, b"", Duration::from_secs(self.cfg.timeout_seconds))
        };
        let out = match out {
            Ok(o) => o,
            Err(ProcError::NotFound(p)) => return Err(SynthError::BackendUnavailable(format!("cannot run `{p}`"))),
            Err(ProcError::Timeout) => return Err(SynthError::Timeout(self.cfg.timeout_seconds)),
            Err(ProcError::Io(e)) => return Err(SynthError::BackendUnavailable(e.to_string())),
        };
        let log = format!("{}{}", out.stdout_text(), out.stderr_text());
        let log_path = workdir.join("synth.log");
        std::fs::write(&log_path, &log).map_err(|e| io(&log_path, e))?;

        let status = if log.lines().any(|l| l.trim() == TIMING_MARKER) {
            SynthStatus::TimingFailure(tail(&log, LOG_TAIL_LINES))
        } else if !out.status.success() {
            let t = tail(&log, LOG_TAIL_LINES);
            SynthStatus::ToolError(if t.trim().is_empty() { format!("synthesis tool exited with {}", out.status) } else { t })
        } else {
            let report = match &self.cfg.report_file {
                Some(r) => {
                    let p = workdir.join(r);
                    std::fs::read_to_string(&p).unwrap_or_default()
                }
                None => log.clone(),
            };
            match parse_report(&report, &self.cfg.dialect) {
                Ok(m) => SynthStatus::Success(m),
                Err(SynthError::NoMetricsFound) => {
                    let mut t = "synthesis finished but the report holds no recognizable metrics".to_string();
                    let lt = tail(&log, LOG_TAIL_LINES);
                    if !lt.trim().is_empty() {
                        t = format!("{t}\n{lt}");
                    }
                    SynthStatus::ToolError(t)
                }
                Err(e) => return Err(e),
            }
        };
        Ok(BackendRun { status, log_path })
    }
}
