//! Lexical-structural model of a C translation unit.
//!
//! The parser is a tokenizer plus bracket matching and declaration
//! heuristics. It understands enough of C to locate functions, globals,
//! type definitions, loops and call sites, and it never rewrites the
//! source: [`SourceUnit::render`] returns the parsed text byte-for-byte.

pub mod consteval;
pub mod lexer;
mod slice;
pub mod syntax;
pub mod types;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use lexer::{TokKind, Token};
use syntax::{is_keyword, Toks, ASSIGN_OPS, LIBRARY_TYPES, TYPE_KEYWORDS};
pub use slice::{Closure, DEFAULT_PERMITTED_EXTERNALS};
pub use types::{Field, FieldType, Leaf, LayoutError, Resolved, ScalarClass, TypeDef, TypeKind};

/// Half-open byte range into the unit text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CsrcError {
    #[error("unsupported construct at {span}: {description}")]
    UnsupportedConstruct { span: Span, description: String },
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("unresolved dependency `{0}`")]
    UnresolvedDependency(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamInfo {
    pub name: String,
    /// Declared type text, without the name, pointer stars or extents.
    pub type_text: String,
    pub span: Span,
    pub pointer_depth: usize,
    /// Array-style extents (`x[16]`); `None` for `x[]` or non-literal extents.
    pub dims: Vec<Option<u64>>,
    pub is_const: bool,
    pub is_pointer: bool,
    pub is_aggregate: bool,
}

impl ParamInfo {
    pub fn is_array_style(&self) -> bool {
        !self.dims.is_empty()
    }

    pub fn is_opaque_pointer(&self) -> bool {
        self.pointer_depth > 0 && types::normalize_type(&self.type_text) == "void"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopInfo {
    pub span: Span,
    /// Span of the loop body statement.
    pub body_span: Span,
    pub keyword: String,
    pub trip_count: Option<u64>,
    pub nesting_depth: usize,
    #[serde(skip)]
    pub(crate) tok_range: (usize, usize),
    #[serde(skip)]
    pub(crate) body_toks: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionInfo {
    pub name: String,
    /// Whole definition, from the first specifier to the closing brace.
    pub span: Span,
    pub signature_span: Span,
    pub body_span: Span,
    pub return_type: String,
    pub params: Vec<ParamInfo>,
    pub loops: Vec<LoopInfo>,
    pub writes_globals: Vec<String>,
    pub reads_globals: Vec<String>,
    pub locals: Vec<String>,
    pub is_static: bool,
    #[serde(skip)]
    pub(crate) tok_range: (usize, usize),
    /// Token indices of the opening and closing body braces.
    #[serde(skip)]
    pub(crate) body_toks: (usize, usize),
}

impl FunctionInfo {
    pub fn param(&self, name: &str) -> Option<&ParamInfo> {
        self.params.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalInfo {
    pub name: String,
    /// Whole declaration statement, including the semicolon.
    pub span: Span,
    pub name_span: Span,
    /// Specifier text before the declarator (storage class included).
    pub specifiers: String,
    pub pointer_depth: usize,
    pub is_array: bool,
    pub dims: Vec<Option<u64>>,
    pub element_count: Option<u64>,
    pub is_const_qualified: bool,
    pub is_static: bool,
    pub has_initializer: bool,
    /// Number of declarators sharing the statement.
    pub declarators: usize,
}

impl GlobalInfo {
    /// Element type with storage class and qualifiers removed.
    pub fn element_type(&self) -> String {
        types::normalize_type(&self.specifiers)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IncludeInfo {
    pub name: String,
    pub system: bool,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CallEdge {
    pub caller: String,
    pub callee: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Prototype {
    pub name: String,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ItemKind {
    Function,
    Global,
    Type,
    Prototype,
    Directive,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Item {
    pub kind: ItemKind,
    pub span: Span,
    /// Name of the function, global, type or prototype (first declarator).
    pub name: Option<String>,
}

/// Parsed model of one translation unit.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceUnit {
    text: String,
    tokens: Vec<Token>,
    pub items: Vec<Item>,
    pub functions: Vec<FunctionInfo>,
    pub globals: Vec<GlobalInfo>,
    pub includes: Vec<IncludeInfo>,
    pub call_edges: Vec<CallEdge>,
    pub types: Vec<TypeDef>,
    pub prototypes: Vec<Prototype>,
    /// Object-like macros (`#define NAME body`).
    pub defines: BTreeMap<String, String>,
    /// Names of function-like macros.
    pub macro_functions: BTreeSet<String>,
}

pub fn parse_unit(text: &str) -> Result<SourceUnit, CsrcError> {
    SourceUnit::parse(text)
}

impl SourceUnit {
    pub fn parse(text: &str) -> Result<SourceUnit, CsrcError> {
        let tokens = lexer::tokenize(text)?;
        let mut unit = SourceUnit {
            text: text.to_string(),
            tokens,
            items: Vec::new(),
            functions: Vec::new(),
            globals: Vec::new(),
            includes: Vec::new(),
            call_edges: Vec::new(),
            types: Vec::new(),
            prototypes: Vec::new(),
            defines: BTreeMap::new(),
            macro_functions: BTreeSet::new(),
        };
        unit.scan_items()?;
        unit.analyze_functions();
        Ok(unit)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn render(&self) -> String {
        self.text.clone()
    }

    pub fn toks(&self) -> Toks<'_> {
        Toks::new(&self.text, &self.tokens)
    }

    pub fn function(&self, name: &str) -> Option<&FunctionInfo> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn require_function(&self, name: &str) -> Result<&FunctionInfo, CsrcError> {
        self.function(name).ok_or_else(|| CsrcError::UnknownFunction(name.to_string()))
    }

    pub fn global(&self, name: &str) -> Option<&GlobalInfo> {
        self.globals.iter().find(|g| g.name == name)
    }

    pub fn slice_text(&self, span: Span) -> &str {
        &self.text[span.start..span.end]
    }

    /// Token index range (inclusive) of a function body, braces excluded.
    pub(crate) fn body_inner(&self, f: &FunctionInfo) -> (usize, usize) {
        (f.body_toks.0 + 1, f.body_toks.1)
    }

    /// Whether `name` names a type in this unit or a well-known library type.
    pub fn is_type_name(&self, name: &str) -> bool {
        TYPE_KEYWORDS.contains(&name) || LIBRARY_TYPES.contains(&name) || self.find_type(name).is_some()
    }

    fn err(&self, a: usize, b: usize, description: &str) -> CsrcError {
        let t = self.toks();
        let end = if b < t.len() { t.end(b) } else { self.text.len() };
        CsrcError::UnsupportedConstruct { span: Span::new(t.start(a.min(t.len().saturating_sub(1))), end), description: description.into() }
    }

    fn scan_items(&mut self) -> Result<(), CsrcError> {
        let n = self.tokens.len();
        let mut i = 0;
        while i < n {
            let t = self.toks();
            if t.kind(i) == Some(TokKind::Directive) {
                self.directive(i);
                i += 1;
                continue;
            }
            if t.is(i, ";") {
                self.items.push(Item { kind: ItemKind::Other, span: self.tokens[i].span, name: None });
                i += 1;
                continue;
            }
            let start = i;
            let mut depth: i64 = 0;
            let mut saw_eq = false;
            let mut j = i;
            loop {
                if j >= n {
                    return Err(self.err(start, n - 1, "unterminated declaration"));
                }
                let kind = t.kind(j).unwrap();
                if kind != TokKind::Punct {
                    j += 1;
                    continue;
                }
                match t.text(j) {
                    "(" | "[" => depth += 1,
                    ")" | "]" => {
                        depth -= 1;
                        if depth < 0 {
                            return Err(self.err(j, j, "unbalanced bracket"));
                        }
                    }
                    "=" if depth == 0 => saw_eq = true,
                    "}" => return Err(self.err(j, j, "unbalanced closing brace")),
                    "{" if depth == 0 => {
                        let close = t.match_close(j).ok_or_else(|| self.err(j, n - 1, "unbalanced opening brace"))?;
                        if !saw_eq && j > start && t.is(j - 1, ")") && !t.is(start, "typedef") {
                            self.function_item(start, j, close)?;
                            i = close + 1;
                            break;
                        }
                        j = close + 1;
                        continue;
                    }
                    ";" if depth == 0 => {
                        self.declaration_item(start, j)?;
                        i = j + 1;
                        break;
                    }
                    _ => {}
                }
                j += 1;
            }
        }
        Ok(())
    }

    fn directive(&mut self, i: usize) {
        let span = self.tokens[i].span;
        let text = self.text[span.start..span.end].to_string();
        let body = text[1..].trim_start();
        let mut name = None;
        if let Some(rest) = body.strip_prefix("include") {
            let rest = rest.trim();
            let (system, inner) = if let Some(r) = rest.strip_prefix('<') {
                (true, r.split('>').next().unwrap_or(""))
            } else if let Some(r) = rest.strip_prefix('"') {
                (false, r.split('"').next().unwrap_or(""))
            } else {
                (false, rest)
            };
            self.includes.push(IncludeInfo { name: inner.to_string(), system, span });
            name = Some(inner.to_string());
        } else if let Some(rest) = body.strip_prefix("define") {
            if rest.starts_with([' ', '\t']) {
                let rest = rest.trim_start();
                let id_len = rest.find(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).unwrap_or(rest.len());
                let id = &rest[..id_len];
                let after = &rest[id_len..];
                if after.starts_with('(') {
                    self.macro_functions.insert(id.to_string());
                } else {
                    let value = after.replace("\\\n", " ");
                    let value = value.split("//").next().unwrap_or("").trim().to_string();
                    self.defines.insert(id.to_string(), value);
                }
                name = Some(id.to_string());
            }
        }
        self.items.push(Item { kind: ItemKind::Directive, span, name });
    }

    fn function_item(&mut self, start: usize, open: usize, close: usize) -> Result<(), CsrcError> {
        let t = self.toks();
        let rparen = open - 1;
        let lparen = t.match_open(rparen).ok_or_else(|| self.err(start, rparen, "unbalanced parameter list"))?;
        if lparen == 0 || !t.is_ident(lparen - 1) || lparen - 1 < start {
            return Err(self.err(start, open, "unrecognized function definition"));
        }
        let name_idx = lparen - 1;
        let name = t.text(name_idx).to_string();
        let return_type = if name_idx > start {
            t.slice(start, name_idx - 1).to_string()
        } else {
            "int".to_string()
        };
        let is_static = (start..name_idx).any(|k| t.is(k, "static"));
        let mut params = Vec::new();
        if rparen > lparen + 1 && !(rparen == lparen + 2 && t.is(lparen + 1, "void")) {
            for (a, b) in t.split_top(lparen + 1, rparen, ",") {
                if a >= b {
                    return Err(self.err(lparen, rparen, "empty parameter"));
                }
                if t.is(a, "...") {
                    continue;
                }
                params.push(self.param(a, b)?);
            }
        }
        let span = Span::new(t.start(start), t.end(close));
        self.functions.push(FunctionInfo {
            name: name.clone(),
            span,
            signature_span: Span::new(t.start(start), t.end(rparen)),
            body_span: Span::new(t.start(open), t.end(close)),
            return_type,
            params,
            loops: Vec::new(),
            writes_globals: Vec::new(),
            reads_globals: Vec::new(),
            locals: Vec::new(),
            is_static,
            tok_range: (start, close),
            body_toks: (open, close),
        });
        self.items.push(Item { kind: ItemKind::Function, span, name: Some(name) });
        Ok(())
    }

    /// Parameter declared by tokens `a..b` (exclusive).
    fn param(&self, a: usize, b: usize) -> Result<ParamInfo, CsrcError> {
        let t = self.toks();
        let span = Span::new(t.start(a), t.end(b - 1));
        // function pointer parameter: R (*name)(...)
        if let Some(k) = (a..b).find(|&k| t.is(k, "(") && t.is(k + 1, "*")) {
            let name = t.text(k + 2).to_string();
            return Ok(ParamInfo {
                name,
                type_text: t.slice(a, k.saturating_sub(1).max(a)).to_string(),
                span,
                pointer_depth: 1,
                dims: Vec::new(),
                is_const: false,
                is_pointer: true,
                is_aggregate: false,
            });
        }
        let first_bracket = (a..b).find(|&k| t.is(k, "[")).unwrap_or(b);
        let name_idx = (a..first_bracket)
            .rev()
            .find(|&k| t.is_ident(k) && !is_keyword(t.text(k)))
            .ok_or_else(|| self.err(a, b - 1, "parameter without a name"))?;
        if name_idx == a {
            return Err(self.err(a, b - 1, "parameter without a type"));
        }
        let mut type_end = name_idx;
        let mut pointer_depth = 0;
        while type_end > a && (t.is(type_end - 1, "*") || t.is(type_end - 1, "const") && pointer_depth > 0) {
            if t.is(type_end - 1, "*") {
                pointer_depth += 1;
            }
            type_end -= 1;
        }
        // `const` after the star qualifies the pointer, not the pointee
        let star_pos = (a..name_idx).find(|&k| t.is(k, "*")).unwrap_or(name_idx);
        let type_text = t.slice(a, star_pos.min(type_end).max(a + 1) - 1).to_string();
        let is_const = (a..star_pos).any(|k| t.is(k, "const"));
        let dims = self.dims_after(name_idx + 1, b);
        let is_aggregate = pointer_depth <= 1 && self.is_aggregate_type(&type_text);
        Ok(ParamInfo {
            name: t.text(name_idx).to_string(),
            type_text,
            span,
            pointer_depth,
            is_pointer: pointer_depth > 0,
            dims,
            is_const,
            is_aggregate,
        })
    }

    /// Extents of `[..]` groups starting at token `i`, stopping before `b`.
    fn dims_after(&self, mut i: usize, b: usize) -> Vec<Option<u64>> {
        let t = self.toks();
        let mut dims = Vec::new();
        while i < b && t.is(i, "[") {
            let Some(close) = t.match_close(i) else { break };
            let v = if close == i + 1 {
                None
            } else {
                consteval::eval(t, i + 1, close, &self.defines).and_then(|v| u64::try_from(v).ok())
            };
            dims.push(v);
            i = close + 1;
        }
        dims
    }

    fn declaration_item(&mut self, a: usize, semi: usize) -> Result<(), CsrcError> {
        let t = self.toks();
        let span = Span::new(t.start(a), t.end(semi));
        if t.is(a, "typedef") {
            let defs = self.typedef(a, semi)?;
            let name = defs.first().map(|d| d.name.clone());
            self.types.extend(defs);
            self.items.push(Item { kind: ItemKind::Type, span, name });
            return Ok(());
        }
        // struct/union/enum definitions
        let tag_kw = (a..semi).find(|&k| !matches!(t.text(k), "static" | "const" | "extern" | "volatile"));
        if let Some(k) = tag_kw {
            if matches!(t.text(k), "struct" | "union" | "enum") {
                let open = if t.is(k + 1, "{") {
                    Some(k + 1)
                } else if t.is_ident(k + 1) && t.is(k + 2, "{") {
                    Some(k + 2)
                } else {
                    None
                };
                if let Some(open) = open {
                    let close = t.match_close(open).unwrap();
                    let tag = if open == k + 2 { Some(t.text(k + 1).to_string()) } else { None };
                    let kw = t.text(k).to_string();
                    let full = tag.map(|g| format!("{kw} {g}"));
                    if let Some(full) = &full {
                        let kind = self.aggregate_kind(&kw, open, close)?;
                        self.types.push(TypeDef { name: full.clone(), span, kind });
                    }
                    if close + 1 == semi {
                        self.items.push(Item { kind: ItemKind::Type, span, name: full });
                        return Ok(());
                    }
                } else if k + 2 == semi {
                    // forward declaration
                    self.items.push(Item { kind: ItemKind::Other, span, name: None });
                    return Ok(());
                }
            }
        }
        let t = self.toks();
        // prototype: first top-level paren follows an identifier and precedes any `=`
        let mut k = a;
        while k < semi {
            if t.is(k, "=") {
                break;
            }
            if t.is(k, "{") {
                k = t.match_close(k).unwrap_or(semi);
            } else if t.is(k, "(") {
                if k > a && t.is_ident(k - 1) && !is_keyword(t.text(k - 1)) && !t.is(k + 1, "*") {
                    let name = t.text(k - 1).to_string();
                    self.prototypes.push(Prototype { name: name.clone(), span });
                    self.items.push(Item { kind: ItemKind::Prototype, span, name: Some(name) });
                    return Ok(());
                }
                k = t.match_close(k).unwrap_or(semi);
            }
            k += 1;
        }
        self.globals_from(a, semi, span)
    }

    fn globals_from(&mut self, a: usize, semi: usize, span: Span) -> Result<(), CsrcError> {
        let t = self.toks();
        let parts = t.split_top(a, semi, ",");
        let declarators = parts.len();
        let mut specifiers = String::new();
        let mut is_const = false;
        let mut is_static = false;
        let mut first_name = None;
        let mut new_globals = Vec::new();
        for (pi, (pa, pb)) in parts.into_iter().enumerate() {
            if pa >= pb {
                return Err(self.err(a, semi, "empty declarator"));
            }
            let stop = (pa..pb).find(|&k| t.is(k, "[") || t.is(k, "=")).unwrap_or(pb);
            let name_idx = if pi == 0 {
                (pa..stop).rev().find(|&k| t.is_ident(k) && !is_keyword(t.text(k)))
            } else {
                (pa..stop).find(|&k| t.is_ident(k) && !is_keyword(t.text(k)))
            };
            let Some(name_idx) = name_idx else {
                if pi == 0 {
                    self.items.push(Item { kind: ItemKind::Other, span, name: None });
                    return Ok(());
                }
                return Err(self.err(pa, pb - 1, "declarator without a name"));
            };
            // parenthesised declarators (function pointers) keep the whole text
            if pi == 0 {
                let star = (pa..name_idx).find(|&k| t.is(k, "*") || t.is(k, "(")).unwrap_or(name_idx);
                if star == pa {
                    return Err(self.err(pa, pb - 1, "declaration without specifiers"));
                }
                specifiers = t.slice(pa, star - 1).to_string();
                is_const = (pa..star).any(|k| t.is(k, "const"));
                is_static = (pa..star).any(|k| t.is(k, "static"));
            }
            let decl_start = if pi == 0 {
                (pa..name_idx).find(|&k| t.is(k, "*")).unwrap_or(name_idx)
            } else {
                pa
            };
            let pointer_depth = (decl_start..name_idx).filter(|&k| t.is(k, "*")).count();
            let dims = self.dims_after(name_idx + 1, pb);
            let has_initializer = (name_idx..pb).any(|k| t.is(k, "="));
            let element_count = if dims.is_empty() || dims.iter().any(Option::is_none) {
                None
            } else {
                Some(dims.iter().map(|d| d.unwrap()).product())
            };
            let name = t.text(name_idx).to_string();
            first_name.get_or_insert_with(|| name.clone());
            new_globals.push(GlobalInfo {
                name,
                span,
                name_span: t.toks[name_idx].span,
                specifiers: specifiers.clone(),
                pointer_depth,
                is_array: !dims.is_empty(),
                dims,
                element_count,
                is_const_qualified: is_const,
                is_static,
                has_initializer,
                declarators,
            });
        }
        self.globals.extend(new_globals);
        self.items.push(Item { kind: ItemKind::Global, span, name: first_name });
        Ok(())
    }

    fn typedef(&self, a: usize, semi: usize) -> Result<Vec<TypeDef>, CsrcError> {
        let t = self.toks();
        let span = Span::new(t.start(a), t.end(semi));
        let mut defs = Vec::new();
        let k = a + 1;
        if matches!(t.text(k), "struct" | "union" | "enum") {
            let open = if t.is(k + 1, "{") {
                Some(k + 1)
            } else if t.is(k + 2, "{") {
                Some(k + 2)
            } else {
                None
            };
            if let Some(open) = open {
                let close = t.match_close(open).ok_or_else(|| self.err(open, semi, "unbalanced brace"))?;
                let kind = self.aggregate_kind(t.text(k), open, close)?;
                if open == k + 2 {
                    defs.push(TypeDef { name: format!("{} {}", t.text(k), t.text(k + 1)), span, kind: kind.clone() });
                }
                for (pa, pb) in t.split_top(close + 1, semi, ",") {
                    let stars = (pa..pb).filter(|&x| t.is(x, "*")).count();
                    if let Some(n) = (pa..pb).find(|&x| t.is_ident(x)) {
                        let kind = if stars > 0 {
                            TypeKind::Alias { target: "void".into(), pointer_depth: stars, dims: vec![] }
                        } else {
                            kind.clone()
                        };
                        defs.push(TypeDef { name: t.text(n).to_string(), span, kind });
                    }
                }
                return Ok(defs);
            }
        }
        if let Some(p) = (a..semi).find(|&x| t.is(x, "(") && t.is(x + 1, "*")) {
            defs.push(TypeDef { name: t.text(p + 2).to_string(), span, kind: TypeKind::FnPointer });
            return Ok(defs);
        }
        let stop = (a..semi).find(|&x| t.is(x, "[")).unwrap_or(semi);
        let name_idx = (a + 1..stop)
            .rev()
            .find(|&x| t.is_ident(x) && !is_keyword(t.text(x)))
            .ok_or_else(|| self.err(a, semi, "typedef without a name"))?;
        let star = (a + 1..name_idx).find(|&x| t.is(x, "*")).unwrap_or(name_idx);
        let pointer_depth = (a + 1..name_idx).filter(|&x| t.is(x, "*")).count();
        if star <= a + 1 {
            return Err(self.err(a, semi, "typedef without a target type"));
        }
        let target = t.slice(a + 1, star - 1).to_string();
        let dims = self.dims_after(name_idx + 1, semi);
        defs.push(TypeDef { name: t.text(name_idx).to_string(), span, kind: TypeKind::Alias { target, pointer_depth, dims } });
        Ok(defs)
    }

    fn aggregate_kind(&self, kw: &str, open: usize, close: usize) -> Result<TypeKind, CsrcError> {
        if kw == "enum" {
            return Ok(TypeKind::Enum);
        }
        Ok(TypeKind::Aggregate { is_union: kw == "union", fields: self.fields(open + 1, close)? })
    }

    fn fields(&self, a: usize, b: usize) -> Result<Vec<Field>, CsrcError> {
        let t = self.toks();
        let mut out = Vec::new();
        let mut parts = t.split_top(a, b, ";");
        parts.retain(|(x, y)| x < y);
        for (pa, pb) in parts {
            let inline_open = if matches!(t.text(pa), "struct" | "union") {
                if t.is(pa + 1, "{") {
                    Some(pa + 1)
                } else if t.is(pa + 2, "{") {
                    Some(pa + 2)
                } else {
                    None
                }
            } else {
                None
            };
            let (ty, decl_from) = if let Some(open) = inline_open {
                let close = t.match_close(open).ok_or_else(|| self.err(open, pb, "unbalanced brace"))?;
                let fields = self.fields(open + 1, close)?;
                (Some(FieldType::Inline { is_union: t.is(pa, "union"), fields }), close + 1)
            } else {
                (None, pa)
            };
            let decls = t.split_top(decl_from, pb, ",");
            let mut base: Option<String> = None;
            for (di, (da, db)) in decls.into_iter().enumerate() {
                let stop = (da..db).find(|&x| t.is(x, "[") || t.is(x, ":")).unwrap_or(db);
                let name_idx = if ty.is_none() && di == 0 {
                    (da..stop).rev().find(|&x| t.is_ident(x) && !is_keyword(t.text(x)))
                } else {
                    (da..stop).find(|&x| t.is_ident(x) && !is_keyword(t.text(x)))
                };
                let Some(name_idx) = name_idx else {
                    return Err(self.err(da, db.saturating_sub(1), "field without a name"));
                };
                if ty.is_none() && di == 0 {
                    let star = (da..name_idx).find(|&x| t.is(x, "*")).unwrap_or(name_idx);
                    if star == da {
                        return Err(self.err(da, db - 1, "field without a type"));
                    }
                    base = Some(types::normalize_type(t.slice(da, star - 1)));
                }
                let pointer_depth = (da..name_idx).filter(|&x| t.is(x, "*")).count();
                out.push(Field {
                    name: t.text(name_idx).to_string(),
                    ty: ty.clone().unwrap_or_else(|| FieldType::Named(base.clone().unwrap_or_default())),
                    pointer_depth,
                    dims: self.dims_after(name_idx + 1, db),
                });
            }
        }
        Ok(out)
    }

    fn analyze_functions(&mut self) {
        let globals: BTreeSet<String> = self.globals.iter().map(|g| g.name.clone()).collect();
        let function_names: BTreeSet<String> = self.functions.iter().map(|f| f.name.clone()).collect();
        let mut edges = Vec::new();
        let mut analyzed = Vec::with_capacity(self.functions.len());
        for f in &self.functions {
            let mut f = f.clone();
            let locals = self.local_names(&f);
            for pi in 0..f.params.len() {
                if f.params[pi].is_opaque_pointer() && self.context_type(&f, &f.params[pi].name).is_some() {
                    f.params[pi].is_aggregate = true;
                }
            }
            f.loops = self.loops_of(&f);
            let t = self.toks();
            let (a, b) = self.body_inner(&f);
            let shadowed = |name: &str| locals.contains(name) || f.params.iter().any(|p| p.name == name);
            let mut writes = BTreeSet::new();
            let mut reads = BTreeSet::new();
            for k in a..b {
                if !t.is_ident(k) {
                    continue;
                }
                let name = t.text(k);
                let after_member = k > 0 && (t.is(k - 1, ".") || t.is(k - 1, "->"));
                if after_member {
                    continue;
                }
                if t.is(k + 1, "(") {
                    if is_keyword(name) || shadowed(name) || self.is_type_name(name) {
                        continue;
                    }
                    edges.push(CallEdge { caller: f.name.clone(), callee: name.to_string(), span: t.toks[k].span });
                    if matches!(name, "memcpy" | "memset" | "memmove") && t.is_ident(k + 2) {
                        let dst = t.text(k + 2);
                        if globals.contains(dst) && !shadowed(dst) {
                            writes.insert(dst.to_string());
                        }
                    }
                    continue;
                }
                if globals.contains(name) && !shadowed(name) && !function_names.contains(name) {
                    reads.insert(name.to_string());
                    if is_lvalue_use(t, k, b) {
                        writes.insert(name.to_string());
                    }
                }
            }
            f.writes_globals = writes.into_iter().collect();
            f.reads_globals = reads.into_iter().collect();
            f.locals = locals.into_iter().collect();
            analyzed.push(f);
        }
        self.functions = analyzed;
        self.call_edges = edges;
    }

    /// Aggregate type behind an opaque `void *` parameter, inferred from a
    /// local `T *v` that is assigned the parameter (`v = ctx` or
    /// `T *v = (T *)ctx`). Returns the local name and the type text.
    pub fn context_type(&self, f: &FunctionInfo, param: &str) -> Option<(String, String)> {
        let t = self.toks();
        let (a, b) = self.body_inner(f);
        for k in a..b {
            if !(t.is(k, param) && t.is_ident(k)) {
                continue;
            }
            // walk back over an optional cast to the `=`
            let mut e = k;
            if e > 0 && t.is(e - 1, ")") {
                e = t.match_open(e - 1)?;
            }
            if e == 0 || !t.is(e - 1, "=") || e < 2 || !t.is_ident(e - 2) {
                continue;
            }
            let local = t.text(e - 2);
            // find the declarator `T * local`
            for d in a..b {
                if t.is(d, local) && d >= 2 && t.is(d - 1, "*") && t.is_ident(d - 2) {
                    let mut s = d - 2;
                    if s > 0 && matches!(t.text(s - 1), "struct" | "union") {
                        s -= 1;
                    }
                    let ty = t.slice(s, d - 2).to_string();
                    if self.is_aggregate_type(&ty) {
                        return Some((local.to_string(), ty));
                    }
                }
            }
        }
        None
    }

    /// Names declared locally inside the body of `f`.
    pub(crate) fn local_names(&self, f: &FunctionInfo) -> BTreeSet<String> {
        let t = self.toks();
        let (a, b) = self.body_inner(f);
        let mut names = BTreeSet::new();
        let mut k = a;
        while k < b {
            let stmt_start = k == a
                || matches!(t.text(k - 1), "{" | ";" | "}")
                || (t.is(k - 1, "(") && k >= 2 && t.is(k - 2, "for"));
            if stmt_start && t.is_ident(k) && self.starts_declaration(k) {
                let end = (k..b).find(|&x| t.is(x, ";") || t.is(x, "{")).unwrap_or(b);
                // skip specifiers
                let mut s = k;
                while s < end && self.is_specifier(s) {
                    if matches!(t.text(s), "struct" | "union" | "enum") {
                        s += 1;
                    }
                    s += 1;
                }
                if s < end {
                    for (pa, pb) in t.split_top(s, end, ",") {
                        if let Some(n) = (pa..pb).find(|&x| t.is_ident(x) && !is_keyword(t.text(x))) {
                            names.insert(t.text(n).to_string());
                        }
                    }
                }
                k = end.max(k + 1);
                continue;
            }
            k += 1;
        }
        names
    }

    fn is_specifier(&self, k: usize) -> bool {
        let t = self.toks();
        let s = t.text(k);
        t.is_ident(k) && (TYPE_KEYWORDS.contains(&s) || LIBRARY_TYPES.contains(&s) || self.find_type(s).is_some())
    }

    /// Whether the statement at token `k` looks like a declaration.
    pub(crate) fn starts_declaration(&self, k: usize) -> bool {
        let t = self.toks();
        if !self.is_specifier(k) {
            return false;
        }
        let s = t.text(k);
        if TYPE_KEYWORDS.contains(&s) {
            return true;
        }
        // typedef name followed by a declarator, not an expression
        t.is_ident(k + 1) || (t.is(k + 1, "*") && t.is_ident(k + 2))
    }

    fn loops_of(&self, f: &FunctionInfo) -> Vec<LoopInfo> {
        let t = self.toks();
        let (a, b) = self.body_inner(f);
        let mut loops: Vec<LoopInfo> = Vec::new();
        let mut trailing_whiles = BTreeSet::new();
        for k in a..b {
            let kw = t.text(k);
            if !t.is_ident(k) || !matches!(kw, "for" | "while" | "do") || trailing_whiles.contains(&k) {
                continue;
            }
            let end = t.stmt_end(k, b);
            let (body_a, body_b) = match kw {
                "do" => {
                    let body_end = t.stmt_end(k + 1, b);
                    if t.is(body_end + 1, "while") {
                        trailing_whiles.insert(body_end + 1);
                    }
                    (k + 1, body_end)
                }
                _ => {
                    let close = t.match_close(k + 1).unwrap_or(k + 1);
                    (close + 1, end)
                }
            };
            let trip_count = if kw == "for" { self.trip_count(k + 1) } else { None };
            let nesting_depth = loops.iter().filter(|l| l.tok_range.0 < k && k <= l.tok_range.1).count();
            let body_a = body_a.min(body_b);
            loops.push(LoopInfo {
                span: Span::new(t.start(k), t.end(end)),
                body_span: Span::new(t.start(body_a), t.end(body_b)),
                keyword: kw.to_string(),
                trip_count,
                nesting_depth,
                tok_range: (k, end),
                body_toks: (body_a, body_b),
            });
        }
        loops
    }

    /// Literal trip count of `for (v = c0; v < c1; v += s)` headers.
    fn trip_count(&self, open: usize) -> Option<u64> {
        let t = self.toks();
        let close = t.match_close(open)?;
        let parts = t.split_top(open + 1, close, ";");
        if parts.len() != 3 {
            return None;
        }
        let (ia, ib) = parts[0];
        let eq = (ia..ib).find(|&x| t.is(x, "="))?;
        let var_idx = eq.checked_sub(1)?;
        if !t.is_ident(var_idx) || var_idx < ia {
            return None;
        }
        let var = t.text(var_idx);
        let c0 = consteval::eval(t, eq + 1, ib, &self.defines)?;

        let (ca, cb) = parts[1];
        if !(cb > ca + 2 && t.is(ca, var)) {
            return None;
        }
        let inclusive = match t.text(ca + 1) {
            "<" => false,
            "<=" => true,
            _ => return None,
        };
        let c1 = consteval::eval(t, ca + 2, cb, &self.defines)?;

        let (sa, sb) = parts[2];
        let step = match sb - sa {
            2 if (t.is(sa, var) && t.is(sa + 1, "++")) || (t.is(sa, "++") && t.is(sa + 1, var)) => 1,
            n if n >= 3 && t.is(sa, var) && t.is(sa + 1, "+=") => consteval::eval(t, sa + 2, sb, &self.defines)?,
            n if n >= 5 && t.is(sa, var) && t.is(sa + 1, "=") && t.is(sa + 2, var) && t.is(sa + 3, "+") => {
                consteval::eval(t, sa + 4, sb, &self.defines)?
            }
            _ => return None,
        };
        if step <= 0 {
            return None;
        }
        let span = if inclusive { c1 - c0 + 1 } else { c1 - c0 };
        if span <= 0 {
            return Some(0);
        }
        u64::try_from((span + step - 1) / step).ok()
    }
}

/// Whether the identifier at `k` starts an lvalue that is assigned,
/// incremented or decremented.
pub(crate) fn is_lvalue_use(t: Toks<'_>, k: usize, limit: usize) -> bool {
    if k > 0 && (t.is(k - 1, "++") || t.is(k - 1, "--")) {
        return true;
    }
    let mut j = k + 1;
    while j < limit {
        if t.is(j, "[") {
            j = t.match_close(j).map(|c| c + 1).unwrap_or(limit);
        } else if (t.is(j, ".") || t.is(j, "->")) && t.is_ident(j + 1) {
            j += 2;
        } else {
            break;
        }
    }
    j < limit && (ASSIGN_OPS.contains(&t.text(j)) || t.is(j, "++") || t.is(j, "--"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_function() {
        let u = parse_unit("int f(void){return 0;}").unwrap();
        assert_eq!(u.functions.len(), 1);
        assert_eq!(u.functions[0].name, "f");
        assert!(u.functions[0].params.is_empty());
        assert!(u.globals.is_empty());
        assert_eq!(u.render(), "int f(void){return 0;}");
    }

    #[test]
    fn globals_and_prototypes() {
        let src = "#define N 4\nstatic const double tw[N * 4];\nint a = 1, b[3];\nint g(int x);\nstruct s { int v; };\n";
        let u = parse_unit(src).unwrap();
        let tw = u.global("tw").unwrap();
        assert!(tw.is_array && tw.is_const_qualified && tw.is_static);
        assert_eq!(tw.element_count, Some(16));
        assert_eq!(tw.element_type(), "double");
        assert!(u.global("a").unwrap().has_initializer);
        assert_eq!(u.global("b").unwrap().element_count, Some(3));
        assert_eq!(u.prototypes[0].name, "g");
        assert!(u.find_type("struct s").is_some());
    }

    #[test]
    fn unknown_array_extent_has_no_count() {
        let u = parse_unit("int n;\nint v[] = {1, 2};\n").unwrap();
        let v = u.global("v").unwrap();
        assert!(v.is_array);
        assert_eq!(v.element_count, None);
    }

    #[test]
    fn loops_and_trip_counts() {
        let src = "void f(int *o){\n  for (int i = 0; i < 8; i++) {\n    for (int j = 2; j <= 10; j += 4) o[i] += j;\n  }\n  while (o[0]) o[0]--;\n  do { o[1]++; } while (o[1] < 3);\n  for (int k = 0; k < o[2]; k++) {}\n}\n";
        let u = parse_unit(src).unwrap();
        let f = &u.functions[0];
        let got: Vec<_> = f.loops.iter().map(|l| (l.keyword.as_str(), l.trip_count, l.nesting_depth)).collect();
        assert_eq!(
            got,
            [("for", Some(8), 0), ("for", Some(3), 1), ("while", None, 0), ("do", None, 0), ("for", None, 0)]
        );
        for l in &f.loops {
            assert!(f.body_span.start < l.span.start && l.span.end < f.body_span.end);
        }
    }

    #[test]
    fn call_edges_skip_keywords_casts_and_members() {
        let src = "typedef unsigned long long fpr;\nint h(int);\nint g(int x){ return h(x); }\nint f(int x){ int (*cb)(int) = g; if (x) { x = (int)(fpr)(x); } return g(x) + cb(x) + sizeof(x); }\n";
        let u = parse_unit(src).unwrap();
        let edges: Vec<_> = u.call_edges.iter().map(|e| (e.caller.as_str(), e.callee.as_str())).collect();
        assert_eq!(edges, [("g", "h"), ("f", "g")]);
    }

    #[test]
    fn global_writes_respect_shadowing() {
        let src = "int tab[4];\nint cnt;\nvoid a(void){ for (int i = 0; i < 4; i++) tab[i] = i; cnt++; }\nvoid b(int tab){ tab = 1; }\nvoid c(void){ int cnt = 0; cnt += tab[1]; }\n";
        let u = parse_unit(src).unwrap();
        assert_eq!(u.function("a").unwrap().writes_globals, ["cnt", "tab"]);
        assert!(u.function("b").unwrap().writes_globals.is_empty());
        assert!(u.function("c").unwrap().writes_globals.is_empty());
        assert_eq!(u.function("c").unwrap().reads_globals, ["tab"]);
    }

    #[test]
    fn struct_typedefs_and_params() {
        let src = "typedef struct { union { unsigned char d[8]; unsigned long long x; } buf; int n; } ctx_t;\nint f(ctx_t *c, const int *p, int a[4], void *v) { return c->n + p[0] + a[0]; }\n";
        let u = parse_unit(src).unwrap();
        let f = u.function("f").unwrap();
        let c = f.param("c").unwrap();
        assert!(c.is_aggregate && c.is_pointer);
        let p = f.param("p").unwrap();
        assert!(p.is_const && p.is_pointer && !p.is_aggregate);
        assert_eq!(p.type_text, "const int");
        assert_eq!(f.param("a").unwrap().dims, [Some(4)]);
        assert!(f.param("v").unwrap().is_opaque_pointer());
        let leaves = u.leaves("ctx_t", 4).unwrap();
        let names: Vec<_> = leaves.iter().map(|l| (l.joined_name(), l.access.join("."), l.byte_len())).collect();
        assert_eq!(names, [("buf".into(), "buf.d".into(), Some(8)), ("n".into(), "n".into(), Some(4))]);
    }

    #[test]
    fn subset_violations_are_reported() {
        assert!(matches!(parse_unit("int f(void){"), Err(CsrcError::UnsupportedConstruct { .. })));
        assert!(matches!(parse_unit("int x; }"), Err(CsrcError::UnsupportedConstruct { .. })));
        assert!(matches!(parse_unit("Sorry, I cannot help with that."), Err(CsrcError::UnsupportedConstruct { .. })));
    }
}
