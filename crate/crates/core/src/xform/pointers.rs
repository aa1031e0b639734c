//! Scalar pointer parameters become fixed-extent arrays.

use std::collections::BTreeMap;

use super::{rep, tok_at, Patch, Replacement, XformError};
use crate::csrc::{FunctionInfo, ParamInfo, SourceUnit};

const RULE: &str = "pointers_to_arrays";

/// Rewrite every scalar pointer parameter of `func` into an array with a
/// known extent. Extents come from `extents` (keyed `func.param`) or, when
/// absent, from the arrays passed at call sites.
pub fn pointers_to_arrays(unit: &SourceUnit, func: &str, extents: &BTreeMap<String, u64>) -> Result<Patch, XformError> {
    let f = unit.require_function(func)?;
    let mut edits: Vec<Replacement> = Vec::new();
    let mut rewritten = Vec::new();
    for (idx, p) in f.params.iter().enumerate() {
        if !p.is_pointer || p.is_array_style() || p.pointer_depth != 1 || p.is_aggregate || p.is_opaque_pointer() {
            continue;
        }
        let extent = match extents.get(&format!("{func}.{}", p.name)) {
            Some(&n) => n,
            None => call_site_extent(unit, func, idx).ok_or_else(|| XformError::UnknownExtent(p.name.clone()))?,
        };
        edits.push(rep(p.span.start, p.span.end, format!("{} {}[{extent}]", p.type_text, p.name)));
        edits.extend(rewrite_uses(unit, f, p)?);
        rewritten.push(format!("{}[{extent}]", p.name));
    }
    if edits.is_empty() {
        return Ok(Patch::empty(RULE, "no scalar pointer parameters"));
    }
    Ok(Patch::from_edits(RULE, &format!("{func}: {}", rewritten.join(", ")), edits))
}

fn rewrite_uses(unit: &SourceUnit, f: &FunctionInfo, p: &ParamInfo) -> Result<Vec<Replacement>, XformError> {
    let t = unit.toks();
    let (a, b) = (f.body_toks.0 + 1, f.body_toks.1);
    let unknown = || XformError::UnknownExtent(p.name.clone());
    let mut edits = Vec::new();
    let mut k = a;
    while k < b {
        let is_name = t.is(k, &p.name) && t.is_ident(k) && !(t.is(k - 1, ".") || t.is(k - 1, "->"));
        // *(p + e)
        if t.is(k, "*") && t.is_unary_star(k) && t.is(k + 1, "(") && t.is(k + 2, &p.name) && t.is(k + 3, "+") {
            let close = t.match_close(k + 1).ok_or_else(unknown)?;
            let index = t.slice(k + 4, close - 1);
            edits.push(rep(t.start(k), t.end(close), format!("{}[{index}]", p.name)));
            k = close + 1;
            continue;
        }
        // *p
        if t.is(k, "*") && t.is_unary_star(k) && t.is(k + 1, &p.name) && t.is_ident(k + 1) {
            edits.push(rep(t.start(k), t.end(k + 1), format!("{}[0]", p.name)));
            k += 2;
            continue;
        }
        if is_name {
            let next = t.text(k + 1);
            let prev = t.text(k - 1);
            let indexed = next == "[";
            let call_arg = matches!(prev, "(" | ",") && matches!(next, ")" | ",") && in_call_args(unit, k);
            if !(indexed || call_arg) {
                return Err(unknown());
            }
        }
        k += 1;
    }
    Ok(edits)
}

/// Whether token `k` sits directly in the argument list of a call.
fn in_call_args(unit: &SourceUnit, k: usize) -> bool {
    let t = unit.toks();
    let mut j = k;
    let mut depth = 0i32;
    while j > 0 {
        j -= 1;
        match t.text(j) {
            ")" | "]" => depth += 1,
            "(" | "[" if depth > 0 => depth -= 1,
            "(" => return j > 0 && t.is_ident(j - 1) && !matches!(t.text(j - 1), "if" | "while" | "for" | "switch" | "return" | "sizeof"),
            "[" | "{" | ";" => return false,
            _ => {}
        }
    }
    false
}

/// Extent implied by array arguments at every call site of `func`.
fn call_site_extent(unit: &SourceUnit, func: &str, idx: usize) -> Option<u64> {
    let t = unit.toks();
    let mut found: Option<u64> = None;
    for e in unit.call_edges.iter().filter(|e| e.callee == func) {
        let k = tok_at(unit, e.span.start);
        let close = t.match_close(k + 1)?;
        let args = t.split_top(k + 2, close, ",");
        let &(aa, ab) = args.get(idx)?;
        if ab != aa + 1 || !t.is_ident(aa) {
            return None;
        }
        let name = t.text(aa);
        let caller = unit.function(&e.caller)?;
        let n = if let Some(cp) = caller.param(name) {
            match cp.dims.first() {
                Some(Some(n)) if cp.dims.len() == 1 => *n,
                _ => return None,
            }
        } else if !caller.locals.iter().any(|l| l == name) {
            let g = unit.global(name)?;
            if !g.is_array || g.dims.len() != 1 {
                return None;
            }
            g.element_count?
        } else {
            return None;
        };
        match found {
            Some(prev) if prev != n => return None,
            _ => found = Some(n),
        }
    }
    found
}
