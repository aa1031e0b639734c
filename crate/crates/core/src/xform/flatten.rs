//! Aggregate interfaces become flat parameter lists.
//!
//! The top function's body moves into `<top>_hls`, which takes the fields
//! it uses as separate scalars and arrays. Callees that receive the
//! aggregate (or a member aggregate) are rewritten as `<callee>_no_structs`.
//! The original top keeps its signature and forwards to `<top>_hls`.

use std::collections::{BTreeMap, BTreeSet};

use super::{rep, splice, Patch, Replacement, XformError};
use crate::csrc::syntax::{removal_span, Toks};
use crate::csrc::types::{normalize_type, Leaf, LayoutError};
use crate::csrc::{is_lvalue_use, FunctionInfo, SourceUnit};

pub const DEFAULT_DEPTH_LIMIT: usize = 4;
const RULE: &str = "flatten_aggregates";
const SUFFIX: &str = "_no_structs";

type Key = (String, usize);

#[derive(Debug, Clone)]
enum UseKind {
    /// `h->a.b` (or `&h->a.b` when `address_of`).
    Leaf { leaf: usize, address_of: bool },
    /// Whole handle or member aggregate passed as call argument `arg`.
    Pass { call: usize, callee: String, arg: usize, prefix: Vec<String>, map: Vec<usize> },
    /// Statement binding the opaque parameter to its typed alias.
    Remove,
}

#[derive(Debug, Clone)]
struct Use {
    /// First and last token, inclusive.
    a: usize,
    b: usize,
    kind: UseKind,
}

#[derive(Debug, Clone)]
struct Node {
    func: String,
    param_name: String,
    /// Expression prefix reaching the fields from the original signature.
    base: String,
    alias: Option<(String, String)>,
    leaves: Vec<Leaf>,
    uses: Vec<Use>,
    used: BTreeSet<usize>,
    written: BTreeSet<usize>,
    names: Vec<String>,
}

impl Node {
    fn by_ref(&self, leaf: usize) -> bool {
        !self.leaves[leaf].is_array() && self.written.contains(&leaf)
    }

    fn leaf_decl(&self, leaf: usize) -> String {
        let l = &self.leaves[leaf];
        let name = &self.names[leaf];
        if l.is_array() {
            format!("{} {name}{}", l.elem_type, l.dims_text())
        } else if self.by_ref(leaf) {
            format!("{} {name}[1]", l.elem_type)
        } else {
            format!("{} {name}", l.elem_type)
        }
    }
}

fn unsupported(msg: impl Into<String>) -> XformError {
    XformError::UnsupportedAggregateUse(msg.into())
}

pub fn flatten_aggregates(unit: &SourceUnit, top: &str) -> Result<Patch, XformError> {
    flatten_aggregates_with(unit, top, DEFAULT_DEPTH_LIMIT)
}

pub fn flatten_aggregates_with(unit: &SourceUnit, top: &str, depth_limit: usize) -> Result<Patch, XformError> {
    let topf = unit.require_function(top)?;
    let hls_name = format!("{top}_hls");
    let roots: Vec<usize> = topf.params.iter().enumerate().filter(|(_, p)| p.is_aggregate).map(|(i, _)| i).collect();
    if roots.is_empty() || unit.function(&hls_name).is_some() {
        return Ok(Patch::empty(RULE, "nothing to flatten"));
    }

    let mut nodes: BTreeMap<Key, Node> = BTreeMap::new();
    let mut work: Vec<Key> = roots.iter().map(|&i| (top.to_string(), i)).collect();
    while let Some(key) = work.pop() {
        if nodes.contains_key(&key) {
            continue;
        }
        let node = build_node(unit, &key.0, key.1, depth_limit)?;
        for u in &node.uses {
            if let UseKind::Pass { callee, arg, .. } = &u.kind {
                if callee == top {
                    return Err(unsupported(format!("recursive call to {top}")));
                }
                work.push((callee.clone(), *arg));
            }
        }
        nodes.insert(key, node);
    }
    link_passes(&mut nodes)?;
    propagate(&mut nodes);

    let prefix_top = roots.len() > 1;
    for ((func, _), n) in nodes.iter_mut() {
        for &li in &n.used {
            if !n.leaves[li].is_bounded() {
                return Err(XformError::UnboundedField(n.leaves[li].access.join(".")));
            }
        }
        let own = func == top && !prefix_top;
        n.names = n
            .leaves
            .iter()
            .map(|l| if own { l.joined_name() } else { format!("{}_{}", n.param_name, l.joined_name()) })
            .collect();
    }

    let tree: BTreeSet<&str> = nodes.keys().map(|(f, _)| f.as_str()).collect();
    let mut edits: Vec<Replacement> = Vec::new();

    // top: flattened copy before it, forwarding body in place
    let hls = rewrite_function(unit, topf, &hls_name, &nodes, true)?;
    edits.push(rep(topf.span.start, topf.span.start, format!("{}\n\n", hls.text)));
    let t = unit.toks();
    edits.push(rep(t.start(topf.body_toks.0), t.end(topf.body_toks.1), wrapper_body(topf, &hls_name, &nodes)));

    let mut callees = Vec::new();
    for &name in tree.iter().filter(|&&n| n != top) {
        let g = unit.require_function(name)?;
        let new_name = format!("{name}{SUFFIX}");
        let r = rewrite_function(unit, g, &new_name, &nodes, false)?;
        let outside = unit.call_edges.iter().any(|e| e.callee == name && !tree.contains(e.caller.as_str()));
        if outside {
            edits.push(rep(g.span.end, g.span.end, format!("\n\n{}", r.text)));
        } else {
            edits.push(rep(g.span.start, g.span.end, r.text.clone()));
        }
        for p in unit.prototypes.iter().filter(|p| p.name == name) {
            if outside {
                edits.push(rep(p.span.end, p.span.end, format!("\n{}", r.prototype)));
            } else {
                edits.push(rep(p.span.start, p.span.end, r.prototype.clone()));
            }
        }
        callees.push(new_name);
    }

    let leaf_count: usize = roots.iter().map(|&i| nodes[&(top.to_string(), i)].used.len()).sum();
    let mut desc = format!("{hls_name} takes {leaf_count} flattened field(s)");
    if !callees.is_empty() {
        desc.push_str(&format!("; rewritten callees: {}", callees.join(", ")));
    }
    Ok(Patch::from_edits(RULE, &desc, edits))
}

fn layout_error(e: LayoutError) -> XformError {
    match e {
        LayoutError::TooDeep(p) => XformError::RecursiveAggregate(p),
        LayoutError::ArrayOfAggregates(p) => unsupported(format!("array of aggregates {p}")),
        LayoutError::Unresolved(p) => unsupported(format!("unknown aggregate type {p}")),
    }
}

fn body_range(f: &FunctionInfo) -> (usize, usize) {
    (f.body_toks.0 + 1, f.body_toks.1)
}

fn stmt_start(t: Toks<'_>, k: usize, a: usize) -> usize {
    let mut s = k;
    while s > a && !matches!(t.text(s - 1), ";" | "{" | "}") {
        s -= 1;
    }
    s
}

/// Whether tokens `a..b` (exclusive) are `param` or `(T *) param`.
fn is_param_value(t: Toks<'_>, a: usize, b: usize, param: &str) -> bool {
    if b == a + 1 {
        return t.is(a, param);
    }
    t.is(a, "(") && t.match_close(a) == Some(b - 2) && t.is(b - 1, param)
}

fn build_node(unit: &SourceUnit, func: &str, idx: usize, depth_limit: usize) -> Result<Node, XformError> {
    let f = unit.require_function(func)?;
    let p = f.params.get(idx).ok_or_else(|| unsupported(format!("{func} has no parameter {idx}")))?;
    let t = unit.toks();
    let (a, b) = body_range(f);
    if p.pointer_depth > 1 {
        return Err(unsupported(format!("double pointer {} in {func}", p.name)));
    }
    let (ty, handle, alias, base) = if p.is_opaque_pointer() {
        let (local, ty) = unit
            .context_type(f, &p.name)
            .ok_or_else(|| unsupported(format!("opaque pointer {} in {func} has no known type", p.name)))?;
        (ty.clone(), local.clone(), Some((local.clone(), ty)), format!("{local}->"))
    } else if p.is_aggregate {
        let op = if p.pointer_depth == 0 { "." } else { "->" };
        (normalize_type(&p.type_text), p.name.clone(), None, format!("{}{op}", p.name))
    } else {
        return Err(unsupported(format!("parameter {} of {func} is not an aggregate", p.name)));
    };
    let leaves = unit.leaves(&ty, depth_limit).map_err(layout_error)?;

    let mut uses = Vec::new();
    let mut removed: Vec<(usize, usize)> = Vec::new();
    if let Some((local, _)) = &alias {
        for k in a..b {
            if !(t.is(k, local) && t.is_ident(k)) || t.is(k - 1, ".") || t.is(k - 1, "->") {
                continue;
            }
            let s = stmt_start(t, k, a);
            let e = t.stmt_end(s, b);
            if removed.iter().any(|&(ra, _)| ra == s) {
                continue;
            }
            let eq = (s..e).find(|&x| t.is(x, "="));
            let binds = match eq {
                // `T *local;` or `T *local = (T *)param;`
                _ if s < k && unit.starts_declaration(s) && t.is(k - 1, "*") => {
                    t.split_top(s, e, ",").len() == 1 && eq.is_none_or(|q| q == k + 1 && is_param_value(t, q + 1, e, &p.name))
                }
                // `local = param;`
                Some(q) if q == k + 1 && s == k => is_param_value(t, q + 1, e, &p.name),
                _ => false,
            };
            if binds {
                removed.push((s, e));
                uses.push(Use { a: s, b: e, kind: UseKind::Remove });
            }
        }
        let inside = |k: usize| removed.iter().any(|&(ra, rb)| (ra..=rb).contains(&k));
        if let Some(k) = (a..b).find(|&k| t.is(k, &p.name) && t.is_ident(k) && !inside(k)) {
            return Err(unsupported(format!("`{}` used directly in {func} at {}", p.name, t.start(k))));
        }
    }
    let inside = |k: usize| removed.iter().any(|&(ra, rb)| (ra..=rb).contains(&k));

    let mut direct_used = BTreeSet::new();
    let mut direct_written = BTreeSet::new();
    let mut k = a;
    while k < b {
        if inside(k) || !(t.is(k, &handle) && t.is_ident(k)) || t.is(k - 1, ".") || t.is(k - 1, "->") {
            k += 1;
            continue;
        }
        let mut members = Vec::new();
        let mut j = k + 1;
        while (t.is(j, "->") || t.is(j, ".")) && t.is_ident(j + 1) {
            members.push(t.text(j + 1).to_string());
            j += 2;
        }
        let end = j - 1;
        let amp = k > 0 && t.is(k - 1, "&") && t.is_unary_amp(k - 1);
        let start = if amp { k - 1 } else { k };
        let leaf = leaves.iter().position(|l| l.access == members);
        let prefix_of = !members.is_empty() && leaves.iter().any(|l| l.access.len() > members.len() && l.access.starts_with(&members));
        if let Some(li) = leaf {
            let address_of = amp && !t.is(end + 1, "[");
            direct_used.insert(li);
            if address_of || is_lvalue_use(t, k, b) {
                direct_written.insert(li);
            }
            let a0 = if address_of { k - 1 } else { k };
            uses.push(Use { a: a0, b: end, kind: UseKind::Leaf { leaf: li, address_of } });
        } else if members.is_empty() || prefix_of {
            if members.is_empty() && amp {
                return Err(unsupported(format!("address of `{handle}` taken in {func}")));
            }
            let (call, arg) = t.call_arg_position(start, end)
                .ok_or_else(|| unsupported(format!("`{}` used outside a call argument in {func}", t.slice(start, end))))?;
            let callee = t.text(call).to_string();
            if unit.function(&callee).is_none() {
                return Err(unsupported(format!("`{}` passed to external {callee}", t.slice(start, end))));
            }
            uses.push(Use { a: start, b: end, kind: UseKind::Pass { call, callee, arg, prefix: members, map: Vec::new() } });
        } else {
            return Err(unsupported(format!("`{}` in {func} is not a supported field", t.slice(k, end))));
        }
        k = end + 1;
    }

    Ok(Node {
        func: func.to_string(),
        param_name: p.name.clone(),
        base,
        alias,
        leaves,
        uses,
        used: direct_used,
        written: direct_written,
        names: Vec::new(),
    })
}

fn link_passes(nodes: &mut BTreeMap<Key, Node>) -> Result<(), XformError> {
    let keys: Vec<Key> = nodes.keys().cloned().collect();
    for key in keys {
        let mut maps = Vec::new();
        for u in &nodes[&key].uses {
            if let UseKind::Pass { callee, arg, prefix, .. } = &u.kind {
                let caller = &nodes[&key];
                let c = &nodes[&(callee.clone(), *arg)];
                let map = c
                    .leaves
                    .iter()
                    .map(|cl| {
                        let mut full = prefix.clone();
                        full.extend(cl.access.iter().cloned());
                        caller.leaves.iter().position(|l| l.access == full)
                    })
                    .collect::<Option<Vec<usize>>>()
                    .ok_or_else(|| unsupported(format!("{callee} expects a different aggregate than {} passes", caller.func)))?;
                maps.push(map);
            }
        }
        let n = nodes.get_mut(&key).expect("key from map");
        let mut it = maps.into_iter();
        for u in &mut n.uses {
            if let UseKind::Pass { map, .. } = &mut u.kind {
                *map = it.next().expect("one map per pass");
            }
        }
    }
    Ok(())
}

/// Fields used or written by callees count for their callers.
fn propagate(nodes: &mut BTreeMap<Key, Node>) {
    let keys: Vec<Key> = nodes.keys().cloned().collect();
    loop {
        let mut changed = false;
        for key in &keys {
            let mut used = Vec::new();
            let mut written = Vec::new();
            for u in &nodes[key].uses {
                if let UseKind::Pass { callee, arg, map, .. } = &u.kind {
                    let c = &nodes[&(callee.clone(), *arg)];
                    used.extend(c.used.iter().map(|&ci| map[ci]));
                    written.extend(c.written.iter().map(|&ci| map[ci]));
                }
            }
            let n = nodes.get_mut(key).expect("key from map");
            for li in used {
                changed |= n.used.insert(li);
            }
            for li in written {
                changed |= n.written.insert(li);
            }
        }
        if !changed {
            break;
        }
    }
}

struct Rewritten {
    text: String,
    prototype: String,
}

fn rewrite_function(
    unit: &SourceUnit,
    f: &FunctionInfo,
    new_name: &str,
    nodes: &BTreeMap<Key, Node>,
    is_top: bool,
) -> Result<Rewritten, XformError> {
    let t = unit.toks();
    let text = unit.text();
    let mine: BTreeMap<usize, &Node> =
        nodes.iter().filter(|((fname, _), _)| *fname == f.name).map(|((_, i), n)| (*i, n)).collect();

    let mut edits: Vec<Replacement> = Vec::new();
    let mut passes: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for n in mine.values() {
        for u in &n.uses {
            let (s, e) = (t.start(u.a), t.end(u.b));
            match &u.kind {
                UseKind::Remove => {
                    let (rs, re) = removal_span(text, s, e);
                    edits.push(rep(rs, re, ""));
                }
                UseKind::Leaf { leaf, address_of } => {
                    let name = &n.names[*leaf];
                    let expr = if *address_of || n.leaves[*leaf].is_array() || !n.by_ref(*leaf) {
                        name.clone()
                    } else {
                        format!("{name}[0]")
                    };
                    edits.push(rep(s, e, expr));
                }
                UseKind::Pass { call, callee, arg, map, .. } => {
                    let c = &nodes[&(callee.clone(), *arg)];
                    let args: Vec<String> = c
                        .used
                        .iter()
                        .map(|&ci| {
                            let li = map[ci];
                            let name = n.names[li].clone();
                            if !n.leaves[li].is_array() && n.by_ref(li) && !c.by_ref(ci) {
                                format!("{name}[0]")
                            } else {
                                name
                            }
                        })
                        .collect();
                    edits.push(rep(s, e, args.join(", ")));
                    passes.entry(*call).or_default().insert(*arg);
                }
            }
        }
    }
    // every call into the rewritten tree must pass all flattened arguments
    let (a, b) = body_range(f);
    for k in a..b {
        let callee = t.text(k);
        if !t.is_ident(k) || !t.is(k + 1, "(") || t.is(k - 1, ".") || t.is(k - 1, "->") {
            continue;
        }
        let expected: BTreeSet<usize> =
            nodes.keys().filter(|(fname, _)| fname == callee).map(|(_, i)| *i).collect();
        if expected.is_empty() {
            continue;
        }
        match passes.get(&k) {
            Some(got) if *got == expected => edits.push(rep(t.start(k), t.end(k), format!("{callee}{SUFFIX}"))),
            _ => return Err(unsupported(format!("call to {callee} in {} does not pass the aggregate", f.name))),
        }
    }

    // signature
    let name_idx = (f.tok_range.0..a).find(|&k| t.is(k, &f.name) && t.is(k + 1, "(")).expect("definition has a name");
    let lparen = name_idx + 1;
    let rparen = t.match_close(lparen).expect("balanced parameter list");
    let mut kept = Vec::new();
    let mut flat = Vec::new();
    for (i, p) in f.params.iter().enumerate() {
        match mine.get(&i) {
            Some(n) => {
                let decls: Vec<String> = n.used.iter().map(|&li| n.leaf_decl(li)).collect();
                if is_top {
                    flat.extend(decls);
                } else {
                    kept.extend(decls);
                }
            }
            None => kept.push(text[p.span.start..p.span.end].to_string()),
        }
    }
    kept.extend(flat);
    let params = if kept.is_empty() { "void".to_string() } else { kept.join(", ") };
    let sig_edits = [rep(t.start(name_idx), t.end(name_idx), new_name), rep(t.end(lparen), t.start(rparen), params)];
    edits.extend(sig_edits.iter().cloned());

    let shift = |r: &Replacement, base: usize| rep(r.span.start - base, r.span.end - base, r.text.clone());
    let mut local: Vec<Replacement> = edits.iter().map(|r| shift(r, f.span.start)).collect();
    local.sort_by_key(|r| (r.span.start, r.span.end));
    let new_text = splice(&text[f.span.start..f.span.end], &local)?;

    let body_open = t.start(f.body_toks.0);
    let sig: Vec<Replacement> = sig_edits.iter().map(|r| shift(r, f.span.start)).collect();
    let prototype = format!("{};", splice(&text[f.span.start..body_open], &sig)?.trim_end());
    Ok(Rewritten { text: new_text, prototype })
}

fn wrapper_body(f: &FunctionInfo, hls_name: &str, nodes: &BTreeMap<Key, Node>) -> String {
    let mut body = String::from("{\n");
    let mut args: Vec<String> = Vec::new();
    let mut flat: Vec<String> = Vec::new();
    for (i, p) in f.params.iter().enumerate() {
        match nodes.get(&(f.name.clone(), i)) {
            Some(n) => {
                if let Some((local, ty)) = &n.alias {
                    body.push_str(&format!("    {ty} *{local} = ({ty} *){};\n", p.name));
                }
                for &li in &n.used {
                    let expr = format!("{}{}", n.base, n.leaves[li].access.join("."));
                    flat.push(if n.by_ref(li) { format!("&{expr}") } else { expr });
                }
            }
            None => args.push(p.name.clone()),
        }
    }
    args.extend(flat);
    let call = format!("{hls_name}({})", args.join(", "));
    if normalize_type(&f.return_type) == "void" {
        body.push_str(&format!("    {call};\n}}"));
    } else {
        body.push_str(&format!("    return {call};\n}}"));
    }
    body
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csrc::parse_unit;
    use crate::xform::apply;

    const PAIR: &str = "typedef struct { unsigned g; unsigned b; unsigned unused; } pc;\n\
static unsigned ap(const pc *c, unsigned x)\n{\n    return x * c->g + c->b;\n}\n\
void top(const pc *ctx, const unsigned in[4], unsigned out[4])\n{\n    for (int i = 0; i < 4; i++) out[i] = ap(ctx, in[i]) ^ ctx->g;\n}\n";

    #[test]
    fn pair_is_flattened() {
        let u = parse_unit(PAIR).unwrap();
        let p = flatten_aggregates(&u, "top").unwrap();
        let out = apply(&u, &p).unwrap().render();
        assert!(out.contains("static unsigned ap_no_structs(unsigned c_g, unsigned c_b, unsigned x)"), "{out}");
        assert!(out.contains("return x * c_g + c_b;"));
        assert!(out.contains("void top_hls(const unsigned in[4], unsigned out[4], unsigned g, unsigned b)"), "{out}");
        assert!(out.contains("out[i] = ap_no_structs(g, b, in[i]) ^ g;"));
        assert!(out.contains("    top_hls(in, out, ctx->g, ctx->b);\n}"));
        assert!(!out.contains("unused,") && !out.contains("static unsigned ap("));
    }

    #[test]
    fn second_run_is_empty() {
        let u = parse_unit(PAIR).unwrap();
        let out = apply(&u, &flatten_aggregates(&u, "top").unwrap()).unwrap();
        let again = flatten_aggregates(&out, "top").unwrap();
        assert!(again.is_empty());
        assert_eq!(again.description, "nothing to flatten");
    }

    #[test]
    fn written_scalar_becomes_cell() {
        let src = "typedef struct { int n; int v[4]; } st;\nint top(st *s)\n{\n    s->n++;\n    return s->v[s->n & 3];\n}\n";
        let u = parse_unit(src).unwrap();
        let out = apply(&u, &flatten_aggregates(&u, "top").unwrap()).unwrap().render();
        assert!(out.contains("int top_hls(int n[1], int v[4])"), "{out}");
        assert!(out.contains("n[0]++;") && out.contains("return v[n[0] & 3];"));
        assert!(out.contains("return top_hls(&s->n, s->v);"));
    }

    #[test]
    fn pointer_field_is_unbounded() {
        let src = "typedef struct { int *data; int n; } vec;\nint top(vec *v){ return v->data[0] + v->n; }\n";
        let u = parse_unit(src).unwrap();
        assert_eq!(flatten_aggregates(&u, "top").unwrap_err(), XformError::UnboundedField("data".into()));
    }

    #[test]
    fn deep_nesting_limit() {
        let src = "struct a { int x; };\nstruct b { struct a a; };\nstruct c { struct b b; };\nint top(struct c *p){ return p->b.a.x; }\n";
        let u = parse_unit(src).unwrap();
        assert!(flatten_aggregates_with(&u, "top", 3).is_ok());
        assert!(matches!(flatten_aggregates_with(&u, "top", 2), Err(XformError::RecursiveAggregate(_))));
    }

    #[test]
    fn escaping_handle_rejected() {
        let src = "typedef struct { int x; } s1;\ns1 *keep;\nint top(s1 *p){ keep = p; return p->x; }\n";
        let u = parse_unit(src).unwrap();
        assert!(matches!(flatten_aggregates(&u, "top"), Err(XformError::UnsupportedAggregateUse(_))));
    }

    #[test]
    fn no_aggregates_is_empty() {
        let u = parse_unit("int f(int a[2]){ return a[0]; }\n").unwrap();
        assert_eq!(flatten_aggregates(&u, "f").unwrap().description, "nothing to flatten");
    }
}
