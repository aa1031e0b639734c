//! Call closures and standalone slices.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::syntax::Toks;
use super::{CsrcError, ItemKind, SourceUnit};

/// C library names a slice may call without a definition.
pub const DEFAULT_PERMITTED_EXTERNALS: &[&str] = &[
    // string.h
    "memcpy", "memset", "memmove", "memcmp", "strlen", "strcmp", "strncmp", "strcpy", "strncpy",
    "strcat", "strchr", "strstr",
    // stdio.h
    "printf", "fprintf", "sprintf", "snprintf", "vprintf", "vfprintf", "puts", "putchar", "fputs",
    "fputc", "fflush", "scanf", "sscanf", "fscanf", "fgets", "getchar", "fread", "fwrite", "fopen",
    "fclose", "perror",
    // stdlib.h
    "malloc", "calloc", "realloc", "free", "abort", "exit", "atoi", "atol", "strtol", "strtoul",
    "strtoull", "strtoll", "abs", "labs", "qsort",
    // math.h
    "sin", "cos", "tan", "asin", "acos", "atan", "atan2", "sinh", "cosh", "tanh", "exp", "exp2",
    "log", "log2", "log10", "pow", "sqrt", "cbrt", "floor", "ceil", "round", "trunc", "fabs",
    "fmod", "ldexp", "frexp", "sinf", "cosf", "sqrtf", "fabsf", "floorf", "expf", "logf", "powf",
    // assert.h
    "assert",
];

/// Result of a call-closure query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Closure {
    /// Root first, then depth-first discovery order.
    pub functions: Vec<String>,
    /// Callees without a definition in the unit, sorted.
    pub external: Vec<String>,
}

impl SourceUnit {
    fn callees(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut map: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for e in &self.call_edges {
            map.entry(e.caller.as_str()).or_default().insert(e.callee.as_str());
        }
        map
    }

    pub fn call_closure(&self, root: &str) -> Result<Closure, CsrcError> {
        self.require_function(root)?;
        let callees = self.callees();
        let mut seen = BTreeSet::new();
        let mut functions = Vec::new();
        let mut external = BTreeSet::new();
        let mut stack = vec![root];
        while let Some(name) = stack.pop() {
            if !seen.insert(name) {
                continue;
            }
            if self.function(name).is_none() {
                external.insert(name.to_string());
                continue;
            }
            functions.push(name.to_string());
            if let Some(cs) = callees.get(name) {
                // reversed so the lexicographically smallest callee is visited first
                for c in cs.iter().rev() {
                    if !seen.contains(c) {
                        stack.push(c);
                    }
                }
            }
        }
        Ok(Closure { functions, external: external.into_iter().collect() })
    }

    /// Functions a slice rooted at `root` keeps: the call closure plus the
    /// initializers of globals it reads, with their own closures.
    pub fn slice_functions(&self, root: &str) -> Result<Vec<String>, CsrcError> {
        let mut kept: BTreeSet<String> = self.call_closure(root)?.functions.into_iter().collect();
        loop {
            let reads: BTreeSet<&str> = kept
                .iter()
                .filter_map(|n| self.function(n))
                .flat_map(|f| f.reads_globals.iter().map(String::as_str))
                .collect();
            let mut added = false;
            for f in &self.functions {
                if kept.contains(&f.name) || !f.params.is_empty() {
                    continue;
                }
                if f.writes_globals.iter().any(|g| reads.contains(g.as_str())) {
                    for n in self.call_closure(&f.name)?.functions {
                        added |= kept.insert(n);
                    }
                }
            }
            if !added {
                break;
            }
        }
        Ok(self.functions.iter().filter(|f| kept.contains(&f.name)).map(|f| f.name.clone()).collect())
    }

    /// Standalone translation unit for `root` and everything it needs.
    pub fn extract_slice(&self, root: &str, extra_permitted: &[String]) -> Result<String, CsrcError> {
        let funcs = self.slice_functions(root)?;
        let kept_fns: BTreeSet<&str> = funcs.iter().map(String::as_str).collect();

        // every undefined callee must be a permitted external or a macro
        let mut undefined = BTreeSet::new();
        for e in &self.call_edges {
            if kept_fns.contains(e.caller.as_str()) && self.function(&e.callee).is_none() {
                undefined.insert(e.callee.as_str());
            }
        }
        for name in undefined {
            let ok = DEFAULT_PERMITTED_EXTERNALS.contains(&name)
                || extra_permitted.iter().any(|p| p == name)
                || self.macro_functions.contains(name);
            if !ok {
                return Err(CsrcError::UnresolvedDependency(name.to_string()));
            }
        }

        let mut kept_globals: BTreeSet<&str> = BTreeSet::new();
        for f in self.functions.iter().filter(|f| kept_fns.contains(f.name.as_str())) {
            kept_globals.extend(f.reads_globals.iter().map(String::as_str));
            kept_globals.extend(f.writes_globals.iter().map(String::as_str));
        }

        let mut keep = vec![false; self.items.len()];
        for (i, item) in self.items.iter().enumerate() {
            keep[i] = match item.kind {
                ItemKind::Directive | ItemKind::Other => true,
                ItemKind::Function | ItemKind::Prototype => {
                    item.name.as_deref().is_some_and(|n| kept_fns.contains(n))
                }
                ItemKind::Global => self
                    .globals
                    .iter()
                    .any(|g| g.span == item.span && kept_globals.contains(g.name.as_str())),
                ItemKind::Type => false,
            };
        }
        // type definitions referenced from kept text, to a fixpoint
        loop {
            let mut changed = false;
            for (i, item) in self.items.iter().enumerate() {
                if keep[i] || item.kind != ItemKind::Type {
                    continue;
                }
                let names: Vec<&str> =
                    self.types.iter().filter(|t| t.span == item.span).map(|t| t.name.as_str()).collect();
                let used = self.items.iter().enumerate().any(|(j, other)| {
                    keep[j] && other.kind != ItemKind::Directive && names.iter().any(|n| self.mentions(other.span, n))
                });
                if used {
                    keep[i] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let mut out = String::new();
        let mut prev_end = 0;
        for (i, item) in self.items.iter().enumerate() {
            if keep[i] {
                out.push_str(&self.text()[prev_end..item.span.end]);
            }
            prev_end = item.span.end;
        }
        if !out.ends_with('\n') {
            out.push('\n');
        }
        if out.starts_with('\n') {
            out = out.trim_start_matches('\n').to_string();
        }
        Ok(out)
    }

    /// Whether the tokens within `span` mention the type `name`
    /// (`struct tag` names match the two-token sequence).
    fn mentions(&self, span: super::Span, name: &str) -> bool {
        let t: Toks<'_> = self.toks();
        let words: Vec<&str> = name.split(' ').collect();
        let first = self.tokens.partition_point(|tok| tok.span.start < span.start);
        let last = self.tokens.partition_point(|tok| tok.span.start < span.end);
        (first..last).any(|k| words.iter().enumerate().all(|(o, w)| k + o < last && t.is_ident(k + o) && t.is(k + o, w)))
    }
}

#[cfg(test)]
mod tests {
    use crate::csrc::parse_unit;

    const CHAIN: &str = "int h(int x){ return x + 1; }\nint g(int x){ return h(x) * 2; }\nint f(int x){ return g(x); }\nint q(int x){ return x; }\n";

    #[test]
    fn linear_chain_closure() {
        let u = parse_unit(CHAIN).unwrap();
        assert_eq!(u.call_closure("f").unwrap().functions, ["f", "g", "h"]);
        assert_eq!(u.call_closure("h").unwrap().functions, ["h"]);
        assert!(u.call_closure("zz").is_err());
    }

    #[test]
    fn lexicographic_tie_break() {
        let src = "void c(void){}\nvoid b(void){ c(); }\nvoid a(void){}\nvoid r(void){ c(); b(); a(); }\n";
        let u = parse_unit(src).unwrap();
        assert_eq!(u.call_closure("r").unwrap().functions, ["r", "a", "b", "c"]);
    }

    #[test]
    fn slice_excludes_unreachable() {
        let u = parse_unit(CHAIN).unwrap();
        let s = u.extract_slice("f", &[]).unwrap();
        assert!(!s.contains("int q"));
        let su = parse_unit(&s).unwrap();
        let names: Vec<_> = su.functions.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, ["h", "g", "f"]);
    }

    #[test]
    fn unresolved_dependency() {
        let u = parse_unit("int f(int x){ return mystery(x); }\n").unwrap();
        assert_eq!(
            u.extract_slice("f", &[]),
            Err(crate::csrc::CsrcError::UnresolvedDependency("mystery".into()))
        );
        assert!(u.extract_slice("f", &["mystery".to_string()]).is_ok());
    }

    #[test]
    fn slice_keeps_types_and_globals() {
        let src = "#include <stdint.h>\ntypedef struct { int v; } box_t;\ntypedef int unused_t;\nint k[2];\nint other;\nint f(box_t *b){ return b->v + k[1]; }\n";
        let u = parse_unit(src).unwrap();
        let s = u.extract_slice("f", &[]).unwrap();
        assert!(s.contains("box_t;") && s.contains("int k[2];") && s.contains("#include <stdint.h>"));
        assert!(!s.contains("unused_t") && !s.contains("int other"));
    }
}
