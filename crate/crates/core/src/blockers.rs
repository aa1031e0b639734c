//! HLS blocker detection.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::csrc::lexer::TokKind;
use crate::csrc::{CsrcError, FunctionInfo, SourceUnit, Span};

pub const DEFAULT_MATH_FUNCTIONS: &[&str] =
    &["sin", "cos", "tan", "pow", "sqrt", "log", "exp", "floor", "round", "fabs"];
pub const DEFAULT_REVIEW_FUNCTIONS: &[&str] = &["floor", "fabs"];
pub const DYNAMIC_MEMORY_FUNCTIONS: &[&str] = &["malloc", "calloc", "realloc", "free"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    MathLibCall,
    FloatingPoint,
    DynamicMemory,
    RuntimeInit,
    AggregateInterface,
    PointerInterface,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::MathLibCall,
        Category::FloatingPoint,
        Category::DynamicMemory,
        Category::RuntimeInit,
        Category::AggregateInterface,
        Category::PointerInterface,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::MathLibCall => "MathLibCall",
            Category::FloatingPoint => "FloatingPoint",
            Category::DynamicMemory => "DynamicMemory",
            Category::RuntimeInit => "RuntimeInit",
            Category::AggregateInterface => "AggregateInterface",
            Category::PointerInterface => "PointerInterface",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockerEntry {
    pub category: Category,
    pub function: String,
    pub span: Span,
    pub detail: String,
}

impl BlockerEntry {
    pub fn to_line(&self) -> String {
        format!("{}\t{}\t{}\t{}", self.category, self.function, self.span, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockerReport {
    pub entries: Vec<BlockerEntry>,
    pub unit_digest: String,
}

impl BlockerReport {
    pub fn is_clean(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, category: Category) -> usize {
        self.entries.iter().filter(|e| e.category == category).count()
    }

    pub fn of(&self, category: Category) -> impl Iterator<Item = &BlockerEntry> {
        self.entries.iter().filter(move |e| e.category == category)
    }

    /// Line-oriented text form, one entry per line.
    pub fn to_text(&self) -> String {
        self.entries.iter().map(|e| e.to_line() + "\n").collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockerConfig {
    pub math_functions: Vec<String>,
    pub review_functions: Vec<String>,
}

impl Default for BlockerConfig {
    fn default() -> Self {
        BlockerConfig {
            math_functions: DEFAULT_MATH_FUNCTIONS.iter().map(|s| s.to_string()).collect(),
            review_functions: DEFAULT_REVIEW_FUNCTIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InitCheck {
    pub is_init: bool,
    /// Global arrays written by the function.
    pub written_arrays: Vec<String>,
    /// Conditions that failed, empty when `is_init`.
    pub reasons: Vec<String>,
}

pub fn unit_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn scan(unit: &SourceUnit) -> BlockerReport {
    scan_with(unit, &BlockerConfig::default())
}

pub fn scan_with(unit: &SourceUnit, cfg: &BlockerConfig) -> BlockerReport {
    let mut entries = Vec::new();
    for f in &unit.functions {
        scan_calls(unit, f, cfg, &mut entries);
        scan_floating(unit, f, &mut entries);
        scan_params(unit, f, &mut entries);
        if let Ok(check) = is_init_function(unit, &f.name) {
            if check.is_init {
                entries.push(BlockerEntry {
                    category: Category::RuntimeInit,
                    function: f.name.clone(),
                    span: f.signature_span,
                    detail: format!("fills global arrays: {}", check.written_arrays.join(", ")),
                });
            }
        }
    }
    entries.sort_by_key(|e| (e.span.start, e.category, e.span.end));
    let mut seen = BTreeSet::new();
    entries.retain(|e| seen.insert((e.span, e.category)));
    BlockerReport { entries, unit_digest: unit_digest(unit.text()) }
}

fn scan_calls(unit: &SourceUnit, f: &FunctionInfo, cfg: &BlockerConfig, out: &mut Vec<BlockerEntry>) {
    let t = unit.toks();
    for e in unit.call_edges.iter().filter(|e| e.caller == f.name) {
        let name = e.callee.as_str();
        let k = t.toks.partition_point(|tok| tok.span.start < e.span.start);
        let end = t.match_close(k + 1).map(|c| t.end(c)).unwrap_or(e.span.end);
        let span = Span::new(e.span.start, end);
        if cfg.math_functions.iter().any(|m| m == name) {
            let review = if cfg.review_functions.iter().any(|m| m == name) { " (review)" } else { "" };
            out.push(BlockerEntry {
                category: Category::MathLibCall,
                function: f.name.clone(),
                span,
                detail: format!("call to {name}{review}"),
            });
        }
        if DYNAMIC_MEMORY_FUNCTIONS.contains(&name) {
            out.push(BlockerEntry {
                category: Category::DynamicMemory,
                function: f.name.clone(),
                span,
                detail: format!("call to {name}"),
            });
        }
    }
}

fn scan_floating(unit: &SourceUnit, f: &FunctionInfo, out: &mut Vec<BlockerEntry>) {
    let t = unit.toks();
    let (a, b) = f.tok_range;
    for k in a..=b {
        if t.kind(k) != Some(TokKind::Ident) {
            continue;
        }
        let word = t.text(k);
        let floating = match word {
            "float" | "double" => true,
            _ if k > 0 && (t.is(k - 1, ".") || t.is(k - 1, "->")) => false,
            _ => unit.find_type(word).is_some() && unit.scalar_info(word).is_some_and(|(_, c)| c.is_floating()),
        };
        if !floating {
            continue;
        }
        let place = if t.start(k) < f.body_span.start { "signature" } else { "body" };
        out.push(BlockerEntry {
            category: Category::FloatingPoint,
            function: f.name.clone(),
            span: t.toks[k].span,
            detail: format!("{word} in {place}"),
        });
    }
}

fn scan_params(unit: &SourceUnit, f: &FunctionInfo, out: &mut Vec<BlockerEntry>) {
    for p in &f.params {
        if p.is_aggregate {
            let detail = if p.is_opaque_pointer() {
                let ty = unit.function(&f.name).and_then(|fi| unit.context_type(fi, &p.name)).map(|(_, t)| t);
                format!("opaque context pointer {} ({})", p.name, ty.unwrap_or_default())
            } else {
                format!("parameter {} of aggregate type {}", p.name, p.type_text)
            };
            out.push(BlockerEntry { category: Category::AggregateInterface, function: f.name.clone(), span: p.span, detail });
        } else if p.is_opaque_pointer() {
            out.push(BlockerEntry {
                category: Category::AggregateInterface,
                function: f.name.clone(),
                span: p.span,
                detail: format!("opaque context pointer {}", p.name),
            });
        } else if p.is_pointer && !p.is_array_style() {
            out.push(BlockerEntry {
                category: Category::PointerInterface,
                function: f.name.clone(),
                span: p.span,
                detail: format!("scalar pointer parameter {}", p.name),
            });
        }
    }
}

/// Whether `name` only fills global arrays from no runtime inputs.
pub fn is_init_function(unit: &SourceUnit, name: &str) -> Result<InitCheck, CsrcError> {
    let f = unit.require_function(name)?;
    let written_arrays: Vec<String> = f
        .writes_globals
        .iter()
        .filter(|g| unit.global(g).is_some_and(|gi| gi.is_array))
        .cloned()
        .collect();
    let mut reasons = Vec::new();
    if written_arrays.is_empty() {
        reasons.push("writes no global array".to_string());
    }
    if !f.params.is_empty() {
        reasons.push("takes parameters".to_string());
    }
    for e in unit.call_edges.iter().filter(|e| e.callee == name && e.caller != name) {
        let caller = unit.function(&e.caller).expect("edges come from defined functions");
        if caller.loops.iter().any(|l| l.span.contains(&e.span)) {
            reasons.push(format!("called inside a loop of {}", e.caller));
            break;
        }
    }
    Ok(InitCheck { is_init: reasons.is_empty(), written_arrays, reasons })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csrc::parse_unit;

    #[test]
    fn trivial_unit_is_clean() {
        let r = scan(&parse_unit("int f(void){return 0;}").unwrap());
        assert!(r.is_clean());
        assert_eq!(r.unit_digest.len(), 64);
    }

    #[test]
    fn review_severity_in_detail() {
        let u = parse_unit("#include <math.h>\nint f(int x){ return (int)floor(x) + (int)sqrt(x); }\n").unwrap();
        let r = scan(&u);
        let details: Vec<_> = r.of(Category::MathLibCall).map(|e| e.detail.as_str()).collect();
        assert_eq!(details, ["call to floor (review)", "call to sqrt"]);
    }

    #[test]
    fn pointer_vs_array_params() {
        let u = parse_unit("void f(int *p, int a[4], const int *c){ a[0] = *p + *c; }\n").unwrap();
        let r = scan(&u);
        let ptrs: Vec<_> = r.of(Category::PointerInterface).map(|e| e.detail.as_str()).collect();
        assert_eq!(ptrs, ["scalar pointer parameter p", "scalar pointer parameter c"]);
    }

    #[test]
    fn config_extends_math_list() {
        let u = parse_unit("int f(int x){ return isqrt(x); }\n").unwrap();
        assert!(scan(&u).is_clean());
        let mut cfg = BlockerConfig::default();
        cfg.math_functions.push("isqrt".into());
        assert_eq!(scan_with(&u, &cfg).count(Category::MathLibCall), 1);
    }

    #[test]
    fn init_requires_no_params() {
        let u = parse_unit("int t[4];\nvoid fill(int s){ for (int i = 0; i < 4; i++) t[i] = s; }\n").unwrap();
        let c = is_init_function(&u, "fill").unwrap();
        assert!(!c.is_init);
        assert_eq!(c.written_arrays, ["t"]);
        assert!(is_init_function(&u, "nope").is_err());
    }

    #[test]
    fn text_form() {
        let e = BlockerEntry {
            category: Category::DynamicMemory,
            function: "f".into(),
            span: Span::new(3, 9),
            detail: "call to malloc".into(),
        };
        assert_eq!(e.to_line(), "DynamicMemory\tf\t3..9\tcall to malloc");
    }
}
