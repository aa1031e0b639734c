//! Deterministic offline backend with a fixed cost model.
//!
//! area   = 10 * statements + 50 * sum of loop unroll factors
//! cycles = sum over loops of ceil(trip / unroll) * (pipelined ? II : body statements) + 5

use std::collections::BTreeSet;
use std::path::Path;

use regex::Regex;
use serde::Serialize;

use super::{parse_report, BackendRun, Objective, ReportDialect, SynthBackend, SynthError, SynthStatus};
use crate::blockers::{Category, DEFAULT_MATH_FUNCTIONS, DYNAMIC_MEMORY_FUNCTIONS};
use crate::csrc::lexer::TokKind;
use crate::csrc::{parse_unit, SourceUnit, Span};
use crate::xform::PragmaDialect;

const AREA_PER_STMT: u64 = 10;
const AREA_PER_UNROLL: u64 = 50;
const FIXED_CYCLES: u64 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MockCost {
    pub statements: u64,
    pub unroll_sum: u64,
    pub area: u64,
    pub cycles: u64,
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    unroll: Regex,
    pipeline: Regex,
    scale: u64,
}

fn directive_regex(template: &str, placeholder: &str) -> Regex {
    let escaped = regex::escape(template.trim());
    let hole = regex::escape(placeholder);
    let pattern = escaped.replace(&hole, r"\s*([0-9]+)\s*").replace(' ', r"\s+");
    Regex::new(&format!("^{pattern}$")).expect("escaped directive template is a valid regex")
}

impl MockBackend {
    pub fn new(dialect: PragmaDialect) -> Self {
        MockBackend {
            unroll: directive_regex(&dialect.unroll, "{factor}"),
            pipeline: directive_regex(&dialect.pipeline, "{ii}"),
            scale: 1,
        }
    }

    /// Multiply every cost-model constant by `k`.
    pub fn with_scale(mut self, k: u64) -> Self {
        self.scale = k.max(1);
        self
    }

    /// Unroll factor and pipeline II from the directive lines right above `pos`.
    fn directives_before(&self, text: &str, pos: usize) -> (u64, Option<u64>) {
        let ls = text[..pos].rfind('\n').map(|p| p + 1).unwrap_or(0);
        let mut unroll = 1;
        let mut ii = None;
        for line in text[..ls].lines().rev() {
            let l = line.trim();
            if !l.starts_with("#pragma") {
                break;
            }
            if let Some(c) = self.unroll.captures(l) {
                unroll = c[1].parse::<u64>().unwrap_or(1).max(1);
            } else if let Some(c) = self.pipeline.captures(l) {
                ii = Some(c[1].parse::<u64>().unwrap_or(1).max(1));
            }
        }
        (unroll, ii)
    }
}

impl Default for MockBackend {
    fn default() -> Self {
        MockBackend::new(PragmaDialect::default())
    }
}

/// Statements in `span`: semicolons outside parentheses.
fn count_statements(unit: &SourceUnit, span: Span) -> u64 {
    let t = unit.toks();
    let mut depth = 0usize;
    let mut n = 0;
    for i in 0..t.len() {
        if t.start(i) < span.start || t.end(i) > span.end || t.kind(i) != Some(TokKind::Punct) {
            continue;
        }
        match t.text(i) {
            "(" => depth += 1,
            ")" => depth = depth.saturating_sub(1),
            ";" if depth == 0 => n += 1,
            _ => {}
        }
    }
    n
}

/// Unsupported constructs in order of first appearance.
fn unsupported(unit: &SourceUnit, top_fn: &str) -> Vec<String> {
    let t = unit.toks();
    let mut found: Vec<String> = Vec::new();
    let mut seen = BTreeSet::new();
    for i in 0..t.len() {
        if t.kind(i) != Some(TokKind::Ident) {
            continue;
        }
        let name = t.text(i);
        let hit = DYNAMIC_MEMORY_FUNCTIONS.contains(&name)
            || (DEFAULT_MATH_FUNCTIONS.contains(&name) && t.is(i + 1, "("));
        if hit && seen.insert(name.to_string()) {
            found.push(format!("unsupported construct: {name}"));
        }
    }
    if let Some(f) = unit.function(top_fn) {
        for p in f.params.iter().filter(|p| p.is_aggregate) {
            found.push(format!("unsupported construct: aggregate parameter `{}` ({}) of {top_fn}", p.name, p.type_text));
        }
    }
    found
}

impl MockBackend {
    /// Cost of `top_fn` and its callees, or the list of rejection messages.
    pub fn cost(&self, code: &str, top_fn: &str) -> Result<MockCost, Vec<String>> {
        let unit = parse_unit(code).map_err(|e| vec![format!("unsupported construct: unparsable source ({e})")])?;
        let bad = unsupported(&unit, top_fn);
        if !bad.is_empty() {
            return Err(bad);
        }
        let closure = unit.call_closure(top_fn).map_err(|_| vec![format!("top function `{top_fn}` not found")])?;
        let text = unit.text();
        let (mut statements, mut unroll_sum, mut cycles) = (0u64, 0u64, FIXED_CYCLES);
        for name in &closure.functions {
            let f = unit.function(name).expect("closure holds defined functions");
            statements += count_statements(&unit, f.body_span);
            for l in &f.loops {
                let (unroll, ii) = self.directives_before(text, l.span.start);
                unroll_sum += unroll;
                let trip = l.trip_count.unwrap_or(1).max(1);
                let per_iter = match ii {
                    Some(ii) => ii,
                    None => count_statements(&unit, l.body_span).max(1),
                };
                cycles += trip.div_ceil(unroll) * per_iter;
            }
        }
        let area = self.scale * (AREA_PER_STMT * statements + AREA_PER_UNROLL * unroll_sum);
        Ok(MockCost { statements, unroll_sum, area, cycles: self.scale * cycles })
    }
}

/// Cost model with the default pragma spelling.
pub fn mock_cost(code: &str, top_fn: &str) -> Result<MockCost, Vec<String>> {
    MockBackend::default().cost(code, top_fn)
}

impl SynthBackend for MockBackend {
    fn name(&self) -> String {
        "mock".to_string()
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn rejected_categories(&self) -> Vec<Category> {
        vec![Category::DynamicMemory, Category::MathLibCall]
    }

    fn run(&self, code: &str, top_fn: &str, objective: Objective, workdir: &Path) -> Result<BackendRun, SynthError> {
        let log_path = workdir.join("synth.log");
        let (log, status) = match self.cost(code, top_fn) {
            Ok(c) => {
                let log = format!(
                    "top: {top_fn}\nobjective: {objective}\nstatements: {}\nunroll sum: {}\nAREA: {}\nCYCLES: {}\n",
                    c.statements, c.unroll_sum, c.area, c.cycles
                );
                let m = parse_report(&log, &ReportDialect::Mock)?;
                (log, SynthStatus::Success(m))
            }
            Err(lines) => {
                let text = lines.join("\n");
                (format!("{text}\n"), SynthStatus::ToolError(text))
            }
        };
        std::fs::write(&log_path, log).map_err(|e| SynthError::Io(format!("{}: {e}", log_path.display())))?;
        Ok(BackendRun { status, log_path })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::synthesize;

    const K: &str = "void k(int a[8])\n{\n    for (int i = 0; i < 8; i++) {\n        a[i] += 1;\n        a[i] ^= 3;\n    }\n}\n";

    fn with_pragmas(lines: &[&str]) -> String {
        let p: String = lines.iter().map(|l| format!("    {l}\n")).collect();
        K.replace("    for", &format!("{p}    for"))
    }

    #[test]
    fn baseline_cost() {
        let c = mock_cost(K, "k").unwrap();
        assert_eq!((c.statements, c.unroll_sum), (2, 1));
        assert_eq!(c.area, 10 * 2 + 50);
        assert_eq!(c.cycles, 8 * 2 + 5);
    }

    #[test]
    fn unroll_and_pipeline() {
        let c = mock_cost(&with_pragmas(&["#pragma hls_unroll 4"]), "k").unwrap();
        assert_eq!((c.area, c.cycles), (20 + 200, 2 * 2 + 5));
        let c = mock_cost(&with_pragmas(&["#pragma hls_unroll 2", "#pragma hls_pipeline_init_interval 1"]), "k").unwrap();
        assert_eq!((c.area, c.cycles), (20 + 100, 4 + 5));
    }

    #[test]
    fn malloc_rejected() {
        let code = "#include <stdlib.h>\nint *g;\nvoid k(void)\n{\n    g = malloc(16);\n    free(g);\n}\n";
        let lines = mock_cost(code, "k").unwrap_err();
        assert_eq!(lines, ["unsupported construct: malloc", "unsupported construct: free"]);
    }

    #[test]
    fn math_and_struct_rejected() {
        let code = "typedef struct { int v[4]; } st;\ndouble k(st *s, double x)\n{\n    return sin(x) + s->v[0];\n}\n";
        let lines = mock_cost(code, "k").unwrap_err();
        assert_eq!(lines[0], "unsupported construct: sin");
        assert!(lines[1].starts_with("unsupported construct: aggregate parameter `s`"));
    }

    #[test]
    fn deterministic_results() {
        let d = tempfile::tempdir().unwrap();
        let b = MockBackend::default();
        let r1 = synthesize(K, "k", &b, Objective::Area, d.path()).unwrap();
        let r2 = synthesize(K, "k", &b, Objective::Area, d.path()).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.metrics().unwrap().area_um2, Some(70.0));
    }

    #[test]
    fn custom_dialect_recognized() {
        let d = PragmaDialect { unroll: "#pragma HLS unroll factor={factor}".into(), pipeline: "#pragma HLS pipeline II={ii}".into() };
        let code = with_pragmas(&["#pragma HLS unroll factor=8"]);
        assert_eq!(MockBackend::new(d).cost(&code, "k").unwrap().cycles, 2 + 5);
    }
}
