//! Source-to-source transforms. Each transform inspects a [`SourceUnit`]
//! and returns a [`Patch`]; [`apply`] splices it and re-parses.

mod flatten;
mod init_removal;
mod pointers;
mod pragmas;
mod static_memory;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csrc::syntax::{removal_span, Toks};
use crate::csrc::{CsrcError, SourceUnit, Span};
use crate::verify::VerifyError;

pub use flatten::{flatten_aggregates, flatten_aggregates_with, DEFAULT_DEPTH_LIMIT};
pub use init_removal::{consts_header_name, remove_runtime_init, InitRemoval};
pub use pointers::pointers_to_arrays;
pub use pragmas::{insert_pragmas, Action, Directive, PragmaDialect, PragmaPlan};
pub use static_memory::map_static_memory;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    DeterministicRule(String),
    LlmExchangeRef(String),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::DeterministicRule(r) => write!(f, "rule:{r}"),
            Provenance::LlmExchangeRef(id) => write!(f, "llm:{id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replacement {
    pub span: Span,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    pub replacements: Vec<Replacement>,
    pub provenance: Provenance,
    pub description: String,
}

impl Patch {
    pub fn empty(rule: &str, description: &str) -> Self {
        Patch {
            replacements: Vec::new(),
            provenance: Provenance::DeterministicRule(rule.to_string()),
            description: description.to_string(),
        }
    }

    /// Patch from edits in any order; edits are sorted by span, ties keep
    /// their given order.
    pub fn from_edits(rule: &str, description: &str, mut edits: Vec<Replacement>) -> Self {
        edits.sort_by_key(|r| (r.span.start, r.span.end));
        Patch {
            replacements: edits,
            provenance: Provenance::DeterministicRule(rule.to_string()),
            description: description.to_string(),
        }
    }

    /// Replace the whole text with `text` (used for LLM rewrites).
    pub fn whole(original_len: usize, text: &str, provenance: Provenance, description: &str) -> Self {
        Patch {
            replacements: vec![Replacement { span: Span::new(0, original_len), text: text.to_string() }],
            provenance,
            description: description.to_string(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.replacements.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstTable {
    pub name: String,
    pub element_type: String,
    pub values: Vec<String>,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum XformError {
    #[error("replacement spans overlap or are out of order at {0}")]
    OverlappingSpans(Span),
    #[error("replacement span {0} is outside the text")]
    SpanOutOfBounds(Span),
    #[error("patched text no longer parses: {0}")]
    PostPatchParseFailure(CsrcError),
    #[error("allocation at {0} has no constant size")]
    NotStaticallySizable(Span),
    #[error("`{0}` is not an initialization function")]
    NotInitFunction(String),
    #[error("runner build failed: {0}")]
    RunnerBuildFailed(String),
    #[error("runner execution failed: {0}")]
    RunnerExecutionFailed(String),
    #[error("table `{0}` cannot be emitted as constants")]
    UnsupportedTable(String),
    #[error("field `{0}` has no static extent")]
    UnboundedField(String),
    #[error("aggregate `{0}` nests deeper than the depth limit")]
    RecursiveAggregate(String),
    #[error("aggregate use not supported: {0}")]
    UnsupportedAggregateUse(String),
    #[error("no extent known for pointer parameter `{0}`")]
    UnknownExtent(String),
    #[error("function `{function}` has no loop {index}")]
    UnknownLoop { function: String, index: usize },
    #[error(transparent)]
    Source(#[from] CsrcError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

/// Splice replacements into `text`.
pub fn splice(text: &str, replacements: &[Replacement]) -> Result<String, XformError> {
    let mut prev_end = 0usize;
    for r in replacements {
        if r.span.start > r.span.end || r.span.end > text.len() {
            return Err(XformError::SpanOutOfBounds(r.span));
        }
        if !text.is_char_boundary(r.span.start) || !text.is_char_boundary(r.span.end) {
            return Err(XformError::SpanOutOfBounds(r.span));
        }
        if r.span.start < prev_end {
            return Err(XformError::OverlappingSpans(r.span));
        }
        prev_end = r.span.end;
    }
    let mut out = String::with_capacity(text.len());
    let mut pos = 0;
    for r in replacements {
        out.push_str(&text[pos..r.span.start]);
        out.push_str(&r.text);
        pos = r.span.end;
    }
    out.push_str(&text[pos..]);
    Ok(out)
}

/// Apply `patch` to `unit`, returning the re-parsed result.
pub fn apply(unit: &SourceUnit, patch: &Patch) -> Result<SourceUnit, XformError> {
    if patch.is_empty() {
        return Ok(unit.clone());
    }
    let text = splice(unit.text(), &patch.replacements)?;
    SourceUnit::parse(&text).map_err(XformError::PostPatchParseFailure)
}

pub(crate) fn rep(start: usize, end: usize, text: impl Into<String>) -> Replacement {
    Replacement { span: Span::new(start, end), text: text.into() }
}

/// Edit deleting the statement spanning tokens `a..=b`. Statements that
/// are the body of a control statement become an empty statement.
pub(crate) fn delete_statement(unit: &SourceUnit, a: usize, b: usize) -> Replacement {
    let t: Toks<'_> = unit.toks();
    let standalone = a == 0 || matches!(t.text(a - 1), ";" | "{" | "}") || t.kind(a - 1) == Some(crate::csrc::lexer::TokKind::Directive);
    if standalone {
        let (s, e) = removal_span(unit.text(), t.start(a), t.end(b));
        rep(s, e, "")
    } else {
        rep(t.start(a), t.end(b), ";")
    }
}

/// Token index of the first token starting at or after byte `pos`.
pub(crate) fn tok_at(unit: &SourceUnit, pos: usize) -> usize {
    unit.toks().toks.partition_point(|t| t.span.start < pos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csrc::parse_unit;

    #[test]
    fn empty_patch_is_identity() {
        let u = parse_unit("int f(void){return 0;}").unwrap();
        assert_eq!(apply(&u, &Patch::empty("t", "none")).unwrap(), u);
    }

    #[test]
    fn single_replacement() {
        let src = "int f(void){return 0;}";
        let u = parse_unit(src).unwrap();
        let at = src.find("return 0").unwrap();
        let p = Patch::from_edits("t", "d", vec![rep(at, at + 8, "return 1")]);
        assert_eq!(apply(&u, &p).unwrap().render(), "int f(void){return 1;}");
    }

    #[test]
    fn unordered_or_overlapping_rejected() {
        let u = parse_unit("int f(void){return 0;}").unwrap();
        let p = Patch {
            replacements: vec![rep(10, 12, "a"), rep(2, 4, "b")],
            provenance: Provenance::DeterministicRule("t".into()),
            description: String::new(),
        };
        assert!(matches!(apply(&u, &p), Err(XformError::OverlappingSpans(_))));
        let p2 = Patch { replacements: vec![rep(2, 6, "a"), rep(4, 8, "b")], ..p.clone() };
        assert!(matches!(apply(&u, &p2), Err(XformError::OverlappingSpans(_))));
        let p3 = Patch { replacements: vec![rep(2, 600, "a")], ..p };
        assert!(matches!(apply(&u, &p3), Err(XformError::SpanOutOfBounds(_))));
    }

    #[test]
    fn insertions_at_same_point_keep_order() {
        let out = splice("ab", &[rep(1, 1, "x"), rep(1, 1, "y")]).unwrap();
        assert_eq!(out, "axyb");
    }

    #[test]
    fn broken_result_is_reported() {
        let u = parse_unit("int f(void){return 0;}").unwrap();
        let p = Patch::from_edits("t", "d", vec![rep(21, 22, "")]);
        assert!(matches!(apply(&u, &p), Err(XformError::PostPatchParseFailure(_))));
    }
}
