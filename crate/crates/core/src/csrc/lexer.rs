//! Byte-offset tokenizer for the supported C subset.
//!
//! Comments are dropped, preprocessor lines become a single opaque
//! [`TokKind::Directive`] token, everything else keeps its exact span so
//! rewrites can splice the original text.

use super::{CsrcError, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokKind {
    Ident,
    Number,
    Str,
    Char,
    Punct,
    Directive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokKind,
    pub span: Span,
}

impl Token {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.span.start..self.span.end]
    }
}

const PUNCT3: [&str; 3] = ["<<=", ">>=", "..."];
const PUNCT2: [&str; 19] = [
    "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=", "-=", "*=", "/=", "%=",
    "&=", "|=", "^=",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, CsrcError> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    // true while only whitespace has been seen since the last newline
    let mut line_start = true;

    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            line_start = true;
            i += 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            let start = i;
            i += 2;
            loop {
                if i + 1 >= bytes.len() {
                    return Err(CsrcError::UnsupportedConstruct {
                        span: Span::new(start, bytes.len()),
                        description: "unterminated block comment".into(),
                    });
                }
                if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                    i += 2;
                    break;
                }
                i += 1;
            }
            continue;
        }
        if c == b'#' && line_start {
            let start = i;
            while i < bytes.len() {
                if bytes[i] == b'\\' && bytes.get(i + 1) == Some(&b'\n') {
                    i += 2;
                    continue;
                }
                if bytes[i] == b'\\' && bytes.get(i + 1) == Some(&b'\r') && bytes.get(i + 2) == Some(&b'\n') {
                    i += 3;
                    continue;
                }
                if bytes[i] == b'\n' {
                    break;
                }
                i += 1;
            }
            let mut end = i;
            while end > start && bytes[end - 1].is_ascii_whitespace() {
                end -= 1;
            }
            toks.push(Token { kind: TokKind::Directive, span: Span::new(start, end) });
            continue;
        }
        line_start = false;

        let start = i;
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            toks.push(Token { kind: TokKind::Ident, span: Span::new(start, i) });
            continue;
        }
        if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit())) {
            i += 1;
            while i < bytes.len() {
                let b = bytes[i];
                let exponent_sign = matches!(b, b'+' | b'-') && matches!(bytes[i - 1], b'e' | b'E' | b'p' | b'P');
                if exponent_sign || b.is_ascii_alphanumeric() || b == b'_' || b == b'.' {
                    i += 1;
                } else {
                    break;
                }
            }
            toks.push(Token { kind: TokKind::Number, span: Span::new(start, i) });
            continue;
        }
        if c == b'"' || c == b'\'' {
            i += 1;
            loop {
                match bytes.get(i) {
                    None | Some(b'\n') => {
                        return Err(CsrcError::UnsupportedConstruct {
                            span: Span::new(start, i),
                            description: if c == b'"' {
                                "unterminated string literal".into()
                            } else {
                                "unterminated character literal".into()
                            },
                        })
                    }
                    Some(b'\\') => i += 2,
                    Some(&b) if b == c => {
                        i += 1;
                        break;
                    }
                    Some(_) => i += 1,
                }
            }
            let kind = if c == b'"' { TokKind::Str } else { TokKind::Char };
            toks.push(Token { kind, span: Span::new(start, i) });
            continue;
        }
        let rest = &src[i..];
        let len = if let Some(p) = PUNCT3.iter().find(|p| rest.starts_with(**p)) {
            p.len()
        } else if let Some(p) = PUNCT2.iter().find(|p| rest.starts_with(**p)) {
            p.len()
        } else {
            rest.chars().next().map(char::len_utf8).unwrap_or(1)
        };
        i += len;
        toks.push(Token { kind: TokKind::Punct, span: Span::new(start, i) });
    }
    Ok(toks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<(TokKind, String)> {
        tokenize(src)
            .unwrap()
            .iter()
            .map(|t| (t.kind, t.text(src).to_string()))
            .collect()
    }

    #[test]
    fn directives_are_single_tokens() {
        let src = "#include <math.h>\n#define X \\\n  4\nint x;";
        let toks = kinds(src);
        assert_eq!(toks[0], (TokKind::Directive, "#include <math.h>".into()));
        assert_eq!(toks[1], (TokKind::Directive, "#define X \\\n  4".into()));
        assert_eq!(toks[2].1, "int");
    }

    #[test]
    fn comments_skipped_and_operators_grouped() {
        let toks = kinds("a->b /* c */ += 0x1p-3; // tail\n x<<=2");
        let texts: Vec<_> = toks.iter().map(|t| t.1.as_str()).collect();
        assert_eq!(texts, ["a", "->", "b", "+=", "0x1p-3", ";", "x", "<<=", "2"]);
    }

    #[test]
    fn hash_inside_line_is_punct() {
        let toks = kinds("a # b");
        assert_eq!(toks[1].0, TokKind::Punct);
    }

    #[test]
    fn unterminated_literals_rejected() {
        assert!(tokenize("char c = 'x;").is_err());
        assert!(tokenize("Sorry, I can't").is_err());
        assert!(tokenize("/* open").is_err());
    }
}
