//! Heap allocations with constant sizes become static buffers.

use std::collections::BTreeSet;

use super::{delete_statement, rep, tok_at, Patch, Replacement, XformError};
use crate::csrc::consteval;
use crate::csrc::syntax::{line_indent, removal_span, Toks};
use crate::csrc::types::{normalize_type, primitive_size};
use crate::csrc::{FunctionInfo, SourceUnit, Span};

const RULE: &str = "static_memory";

/// Replace constant-size `malloc` calls with static storage and drop the
/// matching `free` calls, including helpers whose body only frees.
pub fn map_static_memory(unit: &SourceUnit) -> Result<Patch, XformError> {
    let t = unit.toks();
    let free_only: BTreeSet<&str> =
        unit.functions.iter().filter(|f| is_free_only(unit, f)).map(|f| f.name.as_str()).collect();

    let mut edits = Vec::new();
    let mut taken: BTreeSet<String> = (0..t.len()).filter(|&k| t.is_ident(k)).map(|k| t.text(k).to_string()).collect();
    let mut allocations = 0;
    let mut frees = 0;

    for e in &unit.call_edges {
        if free_only.contains(e.caller.as_str()) {
            continue;
        }
        let f = unit.function(&e.caller).expect("edges come from defined functions");
        let k = tok_at(unit, e.span.start);
        let call_span = call_span(t, k, e.span);
        match e.callee.as_str() {
            "malloc" => {
                edits.push(rewrite_allocation(unit, f, k, call_span, &mut taken)?);
                allocations += 1;
            }
            "calloc" | "realloc" => return Err(XformError::NotStaticallySizable(call_span)),
            "free" => {
                edits.push(statement_call(unit, k).ok_or(XformError::NotStaticallySizable(call_span))?);
                frees += 1;
            }
            callee if free_only.contains(callee) => {
                edits.push(statement_call(unit, k).ok_or(XformError::NotStaticallySizable(call_span))?);
            }
            _ => {}
        }
    }
    for name in &free_only {
        let f = unit.function(name).expect("listed from unit functions");
        edits.push(remove_item(unit.text(), f.span));
        for p in unit.prototypes.iter().filter(|p| p.name == *name) {
            edits.push(remove_item(unit.text(), p.span));
        }
    }
    if edits.is_empty() {
        return Ok(Patch::empty(RULE, "no dynamic memory"));
    }
    let desc = format!(
        "{allocations} allocation(s) made static, {frees} free call(s) and {} free-only helper(s) removed",
        free_only.len()
    );
    Ok(Patch::from_edits(RULE, &desc, edits))
}

fn call_span(t: Toks<'_>, k: usize, fallback: Span) -> Span {
    match t.match_close(k + 1) {
        Some(c) if t.is(k + 1, "(") => Span::new(t.start(k), t.end(c)),
        _ => fallback,
    }
}

/// Deletion of a call used as a whole statement `name(...);`.
fn statement_call(unit: &SourceUnit, k: usize) -> Option<Replacement> {
    let t = unit.toks();
    let close = t.match_close(k + 1)?;
    if !t.is(close + 1, ";") {
        return None;
    }
    Some(delete_statement(unit, k, close + 1))
}

/// Removal of a top-level item, with one trailing blank line when a blank
/// line already precedes it.
pub(crate) fn remove_item(text: &str, span: Span) -> Replacement {
    let (s, mut e) = removal_span(text, span.start, span.end);
    let blank_before = s == 0 || text[..s].ends_with("\n\n");
    if blank_before && text[e..].starts_with('\n') {
        e += 1;
    }
    rep(s, e, "")
}

fn is_free_only(unit: &SourceUnit, f: &FunctionInfo) -> bool {
    if normalize_type(&f.return_type) != "void" {
        return false;
    }
    let t = unit.toks();
    let (a, b) = (f.body_toks.0 + 1, f.body_toks.1);
    if a >= b {
        return false;
    }
    let mut k = a;
    while k < b {
        let end = t.stmt_end(k, b);
        let ok = t.is(k, "free") && t.is(k + 1, "(") && t.match_close(k + 1).is_some_and(|c| c + 1 == end) && t.is(end, ";");
        if !ok {
            return false;
        }
        k = end + 1;
    }
    true
}

fn rewrite_allocation(
    unit: &SourceUnit,
    f: &FunctionInfo,
    k: usize,
    call_span: Span,
    taken: &mut BTreeSet<String>,
) -> Result<Replacement, XformError> {
    let t = unit.toks();
    let bad = || XformError::NotStaticallySizable(call_span);
    let close = t.match_close(k + 1).ok_or_else(bad)?;
    if !t.is(close + 1, ";") {
        return Err(bad());
    }
    let semi = close + 1;
    // optional cast before the call
    let mut e = k;
    if t.is(e - 1, ")") {
        e = t.match_open(e - 1).ok_or_else(bad)?;
    }
    if !t.is(e - 1, "=") {
        return Err(bad());
    }
    let eq = e - 1;
    let body_start = f.body_toks.0 + 1;
    let mut s = eq;
    while s > body_start && !matches!(t.text(s - 1), ";" | "{" | "}") {
        s -= 1;
    }
    if !t.is_ident(eq - 1) {
        return Err(bad());
    }
    let name = t.text(eq - 1).to_string();
    let indent = line_indent(unit.text(), t.start(s)).to_string();

    if s + 1 == eq {
        // `p = malloc(..);` with `T *p;` declared earlier
        let elem = declared_pointee(unit, f, &name).ok_or_else(bad)?;
        let count = element_count(unit, t, k + 2, close, &elem).ok_or_else(bad)?;
        let buf = fresh_name(&format!("{name}_buf"), taken);
        let text = format!("static {elem} {buf}[{count}];\n{indent}{name} = {buf};");
        return Ok(rep(t.start(s), t.end(semi), text));
    }
    if !unit.starts_declaration(s) || !t.is(eq - 2, "*") || t.is(eq - 3, "*") || t.split_top(s, eq, ",").len() > 1 {
        return Err(bad());
    }
    let elem = t.slice(s, eq - 3).to_string();
    let count = element_count(unit, t, k + 2, close, &elem).ok_or_else(bad)?;
    let text = if keeps_identity(unit, f, &name, s, semi) {
        format!("static {elem} {name}[{count}];")
    } else {
        let buf = fresh_name(&format!("{name}_buf"), taken);
        format!("static {elem} {buf}[{count}];\n{indent}{elem} *{name} = {buf};")
    };
    Ok(rep(t.start(s), t.end(semi), text))
}

/// Element type of a local `T *name;` declared in `f`.
fn declared_pointee(unit: &SourceUnit, f: &FunctionInfo, name: &str) -> Option<String> {
    let t = unit.toks();
    let (a, b) = (f.body_toks.0 + 1, f.body_toks.1);
    for d in a..b {
        if !(t.is(d, name) && t.is(d - 1, "*") && (t.is(d + 1, ";") || t.is(d + 1, ","))) || t.is(d - 2, "*") {
            continue;
        }
        let mut s = d;
        while s > a && !matches!(t.text(s - 1), ";" | "{" | "}") {
            s -= 1;
        }
        if !unit.starts_declaration(s) {
            continue;
        }
        let star = (s..d).find(|&x| t.is(x, "*"))?;
        if star == s {
            return None;
        }
        return Some(t.slice(s, star - 1).to_string());
    }
    None
}

/// Number of `elem` values requested by the size expression `a..b`.
fn element_count(unit: &SourceUnit, t: Toks<'_>, a: usize, b: usize, elem: &str) -> Option<u64> {
    let elem_size = unit.scalar_info(elem).map(|s| s.0);
    let factors = t.split_top(a, b, "*");
    let sizeof_at = factors
        .iter()
        .position(|&(fa, fb)| t.is(fa, "sizeof") && t.is(fa + 1, "(") && t.match_close(fa + 1) == Some(fb.saturating_sub(1)));
    let count = match sizeof_at {
        Some(i) => {
            let mut n: i128 = 1;
            for (j, &(fa, fb)) in factors.iter().enumerate() {
                if j != i {
                    n = n.checked_mul(consteval::eval(t, fa, fb, &unit.defines)?)?;
                }
            }
            let (fa, fb) = factors[i];
            let of = t.slice(fa + 2, fb - 2);
            if normalize_type(of) == normalize_type(elem) {
                n
            } else {
                let bytes = n * i128::from(primitive_size(&normalize_type(of)).or_else(|| unit.scalar_info(of).map(|s| s.0))?);
                let es = i128::from(elem_size?);
                if bytes % es != 0 {
                    return None;
                }
                bytes / es
            }
        }
        None => {
            let bytes = consteval::eval(t, a, b, &unit.defines)?;
            let es = i128::from(elem_size?);
            if bytes % es != 0 {
                return None;
            }
            bytes / es
        }
    };
    u64::try_from(count).ok().filter(|&c| c > 0)
}

/// Whether `name` can become the array itself: it is never reassigned,
/// returned, address-taken or measured with `sizeof`.
fn keeps_identity(unit: &SourceUnit, f: &FunctionInfo, name: &str, decl_a: usize, decl_b: usize) -> bool {
    let t = unit.toks();
    let (a, b) = (f.body_toks.0 + 1, f.body_toks.1);
    for k in a..b {
        if (decl_a..=decl_b).contains(&k) || !t.is(k, name) || !t.is_ident(k) {
            continue;
        }
        if k > 0 && (t.is(k - 1, ".") || t.is(k - 1, "->")) {
            continue;
        }
        let next = t.text(k + 1);
        let prev = t.text(k - 1);
        let reassigned = matches!(next, "=" | "+=" | "-=" | "++" | "--") || matches!(prev, "++" | "--");
        let address = prev == "&" && t.is_unary_amp(k - 1);
        let measured = prev == "sizeof" || (prev == "(" && t.is(k - 2, "sizeof"));
        if reassigned || address || measured || prev == "return" {
            return false;
        }
    }
    true
}

fn fresh_name(base: &str, taken: &mut BTreeSet<String>) -> String {
    let mut name = base.to_string();
    let mut n = 2;
    while taken.contains(&name) {
        name = format!("{base}{n}");
        n += 1;
    }
    taken.insert(name.clone());
    name
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockers::{scan, Category};
    use crate::csrc::parse_unit;
    use crate::xform::apply;

    #[test]
    fn declaration_becomes_static_array() {
        let u = parse_unit("#include <stdlib.h>\nvoid f(int o[4])\n{\n    int *p = malloc(4 * sizeof(int));\n    for (int i = 0; i < 4; i++) p[i] = i;\n    o[0] = p[3];\n    free(p);\n}\n").unwrap();
        let out = apply(&u, &map_static_memory(&u).unwrap()).unwrap();
        assert_eq!(
            out.render(),
            "#include <stdlib.h>\nvoid f(int o[4])\n{\n    static int p[4];\n    for (int i = 0; i < 4; i++) p[i] = i;\n    o[0] = p[3];\n}\n"
        );
    }

    #[test]
    fn reassigned_pointer_keeps_pointer() {
        let u = parse_unit("#include <stdlib.h>\nint f(void)\n{\n    char *p = (char *)malloc(8);\n    p[0] = 1;\n    p++;\n    return p[0];\n}\n").unwrap();
        let out = apply(&u, &map_static_memory(&u).unwrap()).unwrap();
        assert!(out.render().contains("static char p_buf[8];\n    char *p = p_buf;"), "{}", out.render());
    }

    #[test]
    fn runtime_size_rejected() {
        let u = parse_unit("#include <stdlib.h>\nvoid f(int n){ int *p = malloc(n * sizeof(int)); p[0] = 0; free(p); }\n").unwrap();
        assert!(matches!(map_static_memory(&u), Err(XformError::NotStaticallySizable(_))));
    }

    #[test]
    fn calloc_rejected() {
        let u = parse_unit("#include <stdlib.h>\nvoid f(void){ int *p = calloc(4, sizeof(int)); p[0] = 0; }\n").unwrap();
        assert!(matches!(map_static_memory(&u), Err(XformError::NotStaticallySizable(_))));
    }

    #[test]
    fn free_under_if_leaves_empty_statement() {
        let u = parse_unit("#include <stdlib.h>\nvoid f(int *q)\n{\n    if (q) free(q);\n    q[0] = 1;\n}\n").unwrap();
        let out = apply(&u, &map_static_memory(&u).unwrap()).unwrap();
        assert!(out.render().contains("if (q) ;"));
        assert_eq!(scan(&out).count(Category::DynamicMemory), 0);
    }

    #[test]
    fn nothing_to_do_is_empty() {
        let u = parse_unit("int f(int x){ return x; }\n").unwrap();
        assert!(map_static_memory(&u).unwrap().is_empty());
    }
}
