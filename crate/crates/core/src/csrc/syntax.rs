//! Token-slice helpers shared by the parser and the transforms.

use super::lexer::{TokKind, Token};

pub const KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else", "enum",
    "extern", "float", "for", "goto", "if", "inline", "int", "long", "register", "restrict",
    "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef", "union",
    "unsigned", "void", "volatile", "while", "_Bool", "_Alignof", "_Static_assert", "__attribute__",
    "__inline", "__restrict", "defined",
];

pub const TYPE_KEYWORDS: &[&str] = &[
    "void", "char", "short", "int", "long", "float", "double", "signed", "unsigned", "_Bool",
    "const", "volatile", "static", "register", "extern", "struct", "union", "enum", "auto",
    "inline", "restrict",
];

/// Common library typedef names that are treated as type words without a
/// visible definition.
pub const LIBRARY_TYPES: &[&str] = &[
    "int8_t", "uint8_t", "int16_t", "uint16_t", "int32_t", "uint32_t", "int64_t", "uint64_t",
    "size_t", "ssize_t", "ptrdiff_t", "intptr_t", "uintptr_t", "bool", "FILE",
];

pub const ASSIGN_OPS: &[&str] = &["=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

/// Cursor-free view over a token list and its source text.
#[derive(Clone, Copy)]
pub struct Toks<'a> {
    pub src: &'a str,
    pub toks: &'a [Token],
}

impl<'a> Toks<'a> {
    pub fn new(src: &'a str, toks: &'a [Token]) -> Self {
        Toks { src, toks }
    }

    pub fn len(&self) -> usize {
        self.toks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.toks.is_empty()
    }

    pub fn text(&self, i: usize) -> &'a str {
        self.toks.get(i).map(|t| t.text(self.src)).unwrap_or("")
    }

    pub fn is(&self, i: usize, s: &str) -> bool {
        i < self.toks.len() && self.toks[i].kind != TokKind::Str && self.text(i) == s
    }

    pub fn is_ident(&self, i: usize) -> bool {
        i < self.toks.len() && self.toks[i].kind == TokKind::Ident
    }

    pub fn kind(&self, i: usize) -> Option<TokKind> {
        self.toks.get(i).map(|t| t.kind)
    }

    pub fn start(&self, i: usize) -> usize {
        self.toks[i].span.start
    }

    pub fn end(&self, i: usize) -> usize {
        self.toks[i].span.end
    }

    /// Source text covering tokens `a..=b`.
    pub fn slice(&self, a: usize, b: usize) -> &'a str {
        &self.src[self.start(a)..self.end(b)]
    }

    /// Index of the bracket closing the one opened at `open`.
    pub fn match_close(&self, open: usize) -> Option<usize> {
        let (o, c) = match self.text(open) {
            "(" => ("(", ")"),
            "[" => ("[", "]"),
            "{" => ("{", "}"),
            _ => return None,
        };
        let mut depth = 0usize;
        for i in open..self.toks.len() {
            if self.toks[i].kind != TokKind::Punct {
                continue;
            }
            let t = self.text(i);
            if t == o {
                depth += 1;
            } else if t == c {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
        }
        None
    }

    /// Index of the bracket opening the one closed at `close`.
    pub fn match_open(&self, close: usize) -> Option<usize> {
        let (o, c) = match self.text(close) {
            ")" => ("(", ")"),
            "]" => ("[", "]"),
            "}" => ("{", "}"),
            _ => return None,
        };
        let mut depth = 0usize;
        for i in (0..=close).rev() {
            if self.toks[i].kind != TokKind::Punct {
                continue;
            }
            let t = self.text(i);
            if t == c {
                depth += 1;
            } else if t == o {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
        }
        None
    }

    /// Last token index of the statement starting at `i`, bounded by `limit`
    /// (exclusive).
    pub fn stmt_end(&self, i: usize, limit: usize) -> usize {
        if i >= limit {
            return limit.saturating_sub(1);
        }
        match self.text(i) {
            "{" => self.match_close(i).unwrap_or(limit - 1),
            "if" => {
                let close = self.paren_after(i, limit);
                let mut end = self.stmt_end(close + 1, limit);
                if self.is(end + 1, "else") && end + 1 < limit {
                    end = self.stmt_end(end + 2, limit);
                }
                end
            }
            "for" | "while" | "switch" => {
                let close = self.paren_after(i, limit);
                if self.is(close + 1, ";") {
                    close + 1
                } else {
                    self.stmt_end(close + 1, limit)
                }
            }
            "do" => {
                let body_end = self.stmt_end(i + 1, limit);
                // while ( ... ) ;
                let w = body_end + 1;
                if self.is(w, "while") {
                    let close = self.paren_after(w, limit);
                    if self.is(close + 1, ";") {
                        return close + 1;
                    }
                    return close;
                }
                body_end
            }
            _ => {
                let mut j = i;
                while j < limit {
                    match self.text(j) {
                        "(" | "[" | "{" if self.toks[j].kind == TokKind::Punct => {
                            j = self.match_close(j).unwrap_or(limit - 1);
                        }
                        ";" if self.toks[j].kind == TokKind::Punct => return j,
                        _ => {}
                    }
                    j += 1;
                }
                limit - 1
            }
        }
    }

    /// Closing paren of the parenthesised group right after token `kw`.
    fn paren_after(&self, kw: usize, limit: usize) -> usize {
        if self.is(kw + 1, "(") {
            self.match_close(kw + 1).unwrap_or(limit - 1).min(limit - 1)
        } else {
            kw
        }
    }

    /// Split `a..b` (exclusive) at `sep` tokens that are outside brackets.
    pub fn split_top(&self, a: usize, b: usize, sep: &str) -> Vec<(usize, usize)> {
        let mut parts = Vec::new();
        let mut start = a;
        let mut j = a;
        while j < b {
            if self.toks[j].kind == TokKind::Punct {
                match self.text(j) {
                    "(" | "[" | "{" => {
                        j = self.match_close(j).unwrap_or(b - 1);
                    }
                    t if t == sep => {
                        parts.push((start, j));
                        start = j + 1;
                    }
                    _ => {}
                }
            }
            j += 1;
        }
        parts.push((start, b));
        parts
    }

    /// Callee token and argument index when tokens `s..=e` form one whole
    /// call argument.
    pub fn call_arg_position(&self, s: usize, e: usize) -> Option<(usize, usize)> {
        if !(self.is(s - 1, "(") || self.is(s - 1, ",")) || !(self.is(e + 1, ")") || self.is(e + 1, ",")) {
            return None;
        }
        let mut j = s;
        let mut depth = 0i32;
        let open = loop {
            if j == 0 {
                return None;
            }
            j -= 1;
            match self.text(j) {
                ")" | "]" => depth += 1,
                "(" | "[" if depth > 0 => depth -= 1,
                "(" => break j,
                "[" | "{" | ";" => return None,
                _ => {}
            }
        };
        if open == 0 || !self.is_ident(open - 1) || is_keyword(self.text(open - 1)) {
            return None;
        }
        let close = self.match_close(open)?;
        let idx = self.split_top(open + 1, close, ",").iter().position(|&(pa, pb)| pa == s && pb == e + 1)?;
        Some((open - 1, idx))
    }

    /// Whether the `&` at `i` takes an address rather than a bitwise and.
    pub fn is_unary_amp(&self, i: usize) -> bool {
        self.is_unary_star(i)
    }

    /// Whether the `*` at `i` is a unary dereference rather than a product.
    pub fn is_unary_star(&self, i: usize) -> bool {
        if i == 0 {
            return true;
        }
        let p = i - 1;
        match self.kind(p) {
            Some(TokKind::Ident) => {
                let t = self.text(p);
                is_keyword(t) && !matches!(t, "sizeof")
            }
            Some(TokKind::Number) | Some(TokKind::Str) | Some(TokKind::Char) => false,
            _ if self.is(p, ")") => {
                // `for (...) *p = 0;` starts a statement
                self.match_open(p).is_some_and(|o| o > 0 && matches!(self.text(o - 1), "if" | "for" | "while" | "switch"))
            }
            _ => !matches!(self.text(p), "]" | "++" | "--"),
        }
    }
}

/// Byte span that removes the statement `[start, end)` together with its
/// indentation and line break when it occupies whole lines.
pub fn removal_span(src: &str, start: usize, end: usize) -> (usize, usize) {
    let bytes = src.as_bytes();
    let mut s = start;
    while s > 0 && matches!(bytes[s - 1], b' ' | b'\t') {
        s -= 1;
    }
    let line_begins = s == 0 || bytes[s - 1] == b'\n';
    let mut e = end;
    while e < bytes.len() && matches!(bytes[e], b' ' | b'\t' | b'\r') {
        e += 1;
    }
    let line_ends = e >= bytes.len() || bytes[e] == b'\n';
    if line_begins && line_ends {
        (s, (e + 1).min(bytes.len()))
    } else {
        (start, end)
    }
}

/// Leading whitespace of the line containing byte `pos`.
pub fn line_indent(src: &str, pos: usize) -> &str {
    let ls = src[..pos].rfind('\n').map(|p| p + 1).unwrap_or(0);
    let rest = &src[ls..];
    let n = rest.len() - rest.trim_start_matches([' ', '\t']).len();
    &src[ls..ls + n]
}

/// True when only blanks precede `pos` on its line.
pub fn at_line_start(src: &str, pos: usize) -> bool {
    let ls = src[..pos].rfind('\n').map(|p| p + 1).unwrap_or(0);
    src[ls..pos].chars().all(|c| c == ' ' || c == '\t')
}
