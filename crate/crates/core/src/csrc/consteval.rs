//! Integer constant expressions: literals, object-like macros with
//! literal bodies, `sizeof` of primitive types and the usual arithmetic.

use std::collections::BTreeMap;

use super::lexer::{tokenize, TokKind};
use super::syntax::Toks;
use super::types::primitive_size;

const MAX_MACRO_DEPTH: usize = 16;

pub fn parse_int_literal(s: &str) -> Option<i128> {
    let t = s.trim_end_matches(['u', 'U', 'l', 'L']);
    if t.is_empty() {
        return None;
    }
    if let Some(h) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        i128::from_str_radix(h, 16).ok()
    } else if t.len() > 1 && t.starts_with('0') {
        i128::from_str_radix(&t[1..], 8).ok()
    } else {
        t.parse().ok()
    }
}

/// Evaluate tokens `a..b` (exclusive) of `toks` as an integer constant.
pub fn eval(toks: Toks<'_>, a: usize, b: usize, defines: &BTreeMap<String, String>) -> Option<i128> {
    eval_depth(toks, a, b, defines, 0)
}

/// Evaluate a standalone expression text.
pub fn eval_text(text: &str, defines: &BTreeMap<String, String>) -> Option<i128> {
    eval_text_depth(text, defines, 0)
}

fn eval_text_depth(text: &str, defines: &BTreeMap<String, String>, depth: usize) -> Option<i128> {
    let toks = tokenize(text).ok()?;
    let view = Toks::new(text, &toks);
    eval_depth(view, 0, toks.len(), defines, depth)
}

fn eval_depth(
    toks: Toks<'_>,
    a: usize,
    b: usize,
    defines: &BTreeMap<String, String>,
    depth: usize,
) -> Option<i128> {
    if a >= b || depth > MAX_MACRO_DEPTH {
        return None;
    }
    let mut p = Parser { toks, pos: a, end: b, defines, depth };
    let v = p.expr(0)?;
    (p.pos == b).then_some(v)
}

struct Parser<'a, 'd> {
    toks: Toks<'a>,
    pos: usize,
    end: usize,
    defines: &'d BTreeMap<String, String>,
    depth: usize,
}

fn binop_prec(op: &str) -> Option<u8> {
    Some(match op {
        "|" => 1,
        "^" => 2,
        "&" => 3,
        "<<" | ">>" => 4,
        "+" | "-" => 5,
        "*" | "/" | "%" => 6,
        _ => return None,
    })
}

impl Parser<'_, '_> {
    fn peek(&self) -> Option<&str> {
        (self.pos < self.end).then(|| self.toks.text(self.pos))
    }

    fn expr(&mut self, min_prec: u8) -> Option<i128> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.peek() {
            let Some(prec) = binop_prec(op) else { break };
            if prec < min_prec {
                break;
            }
            let op = op.to_string();
            self.pos += 1;
            let rhs = self.expr(prec + 1)?;
            lhs = match op.as_str() {
                "+" => lhs.checked_add(rhs)?,
                "-" => lhs.checked_sub(rhs)?,
                "*" => lhs.checked_mul(rhs)?,
                "/" => lhs.checked_div(rhs)?,
                "%" => lhs.checked_rem(rhs)?,
                "<<" => lhs.checked_shl(u32::try_from(rhs).ok()?)?,
                ">>" => lhs.checked_shr(u32::try_from(rhs).ok()?)?,
                "&" => lhs & rhs,
                "|" => lhs | rhs,
                "^" => lhs ^ rhs,
                _ => return None,
            };
        }
        Some(lhs)
    }

    fn unary(&mut self) -> Option<i128> {
        let t = self.peek()?.to_string();
        match t.as_str() {
            "-" => {
                self.pos += 1;
                self.unary().map(|v| -v)
            }
            "+" => {
                self.pos += 1;
                self.unary()
            }
            "~" => {
                self.pos += 1;
                self.unary().map(|v| !v)
            }
            "(" => {
                let close = self.toks.match_close(self.pos)?;
                if close >= self.end {
                    return None;
                }
                // a group that is not a value is taken to be a cast and skipped
                let v = eval_depth(self.toks, self.pos + 1, close, self.defines, self.depth);
                self.pos = close + 1;
                match v {
                    Some(v) => Some(v),
                    None => self.unary(),
                }
            }
            "sizeof" => {
                self.pos += 1;
                if self.peek() != Some("(") {
                    return None;
                }
                let close = self.toks.match_close(self.pos)?;
                let ty = self.toks.slice(self.pos + 1, close - 1);
                self.pos = close + 1;
                primitive_size(ty).map(i128::from)
            }
            _ => {
                let kind = self.toks.kind(self.pos)?;
                self.pos += 1;
                match kind {
                    TokKind::Number => parse_int_literal(&t),
                    TokKind::Ident => {
                        let body = self.defines.get(&t)?;
                        eval_text_depth(body, self.defines, self.depth + 1)
                    }
                    _ => None,
                }
            }
        }
    }
}
