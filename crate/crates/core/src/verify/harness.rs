//! Schema inference and KAT harness generation.
//!
//! A harness is a C fragment appended to the kernel text. It reads the case
//! count, then per case the input fields as hex lines, calls the top
//! function and prints the output fields as hex lines followed by a blank
//! line.

use super::kat::{Direction, FieldSpec, Schema};
use super::VerifyError;
use crate::blockers::is_init_function;
use crate::csrc::types::normalize_type;
use crate::csrc::{FunctionInfo, ParamInfo, SourceUnit};

/// Aggregate nesting accepted when binding context structures.
const MAX_DEPTH: usize = 4;

#[derive(Debug, Clone, PartialEq)]
enum Binding {
    Scalar { ty: String, size: u64 },
    Array { ty: String, dims: Vec<u64>, bytes: u64, dir: Access },
    /// Pointer to one element.
    Cell { ty: String, size: u64, dir: Access },
    Aggregate { ty: String, by_value: bool, leaves: Vec<(String, String, u64)>, dir: Access },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Access {
    In,
    Out,
    InOut,
}

#[derive(Debug, Clone, Copy, Default)]
struct Usage {
    read: bool,
    written: bool,
}

fn usage(unit: &SourceUnit, f: &FunctionInfo, name: &str, depth: usize) -> Usage {
    let t = unit.toks();
    let (a, b) = (f.body_toks.0 + 1, f.body_toks.1);
    let mut u = Usage::default();
    for k in a..b {
        if !(t.is_ident(k) && t.is(k, name)) || (k > 0 && (t.is(k - 1, ".") || t.is(k - 1, "->"))) {
            continue;
        }
        let mut j = k + 1;
        while j < b && t.is(j, "[") {
            j = t.match_close(j).map(|c| c + 1).unwrap_or(b);
        }
        let pre_incdec = k > 0 && (t.is(k - 1, "++") || t.is(k - 1, "--"));
        let deref = k > 0 && t.is(k - 1, "*") && t.is_unary_star(k - 1);
        if (j > k + 1 || deref) && t.is(j, "=") {
            u.written = true;
        } else if pre_incdec || t.is(j, "++") || t.is(j, "--") || (j < b && crate::csrc::syntax::ASSIGN_OPS.contains(&t.text(j))) {
            u.read = true;
            u.written = true;
        } else if k > 0 && (t.is(k - 1, "(") || t.is(k - 1, ",")) && (t.is(j, ")") || t.is(j, ",")) && j == k + 1 {
            // passed whole: follow into a defined callee, else assume both
            let inner = t.call_arg_position(k, k).and_then(|(c, i)| {
                let g = unit.function(t.text(c))?;
                let gp = g.params.get(i)?;
                (depth < 8 && g.name != f.name).then(|| usage(unit, g, &gp.name, depth + 1))
            });
            let inner = inner.unwrap_or(Usage { read: true, written: true });
            u.read |= inner.read;
            u.written |= inner.written;
        } else {
            u.read = true;
        }
    }
    u
}

fn access_of(is_const: bool, u: Usage) -> Access {
    if is_const || !u.written {
        Access::In
    } else if !u.read {
        Access::Out
    } else {
        Access::InOut
    }
}

fn bind_param(unit: &SourceUnit, f: &FunctionInfo, p: &ParamInfo) -> Result<Binding, VerifyError> {
    let err = || VerifyError::SchemaBindingError(p.name.clone());
    let u = usage(unit, f, &p.name, 0);
    let base = normalize_type(&p.type_text);
    if p.is_opaque_pointer() || (p.is_aggregate && p.pointer_depth <= 1) {
        let ty = if p.is_opaque_pointer() {
            unit.context_type(f, &p.name).map(|(_, t)| t).ok_or_else(err)?
        } else {
            base.clone()
        };
        let leaves = unit
            .leaves(&ty, MAX_DEPTH)
            .map_err(|_| err())?
            .into_iter()
            .map(|l| {
                let bytes = l.byte_len().ok_or_else(err)?;
                Ok((l.joined_name(), l.access.join("."), bytes))
            })
            .collect::<Result<Vec<_>, VerifyError>>()?;
        let dir = if p.is_const { Access::In } else { Access::InOut };
        return Ok(Binding::Aggregate { ty, by_value: p.pointer_depth == 0, leaves, dir });
    }
    let (size, _) = unit.scalar_info(&base).ok_or_else(err)?;
    if p.is_array_style() {
        if p.pointer_depth > 0 || p.dims.iter().any(Option::is_none) {
            return Err(err());
        }
        let dims: Vec<u64> = p.dims.iter().map(|d| d.unwrap()).collect();
        let bytes = dims.iter().product::<u64>() * size;
        return Ok(Binding::Array { ty: base, dims, bytes, dir: access_of(p.is_const, u) });
    }
    match p.pointer_depth {
        0 => Ok(Binding::Scalar { ty: base, size }),
        1 => Ok(Binding::Cell { ty: base, size, dir: access_of(p.is_const, u) }),
        _ => Err(err()),
    }
}

/// Fields a binding contributes, as (field, direction, length, C lvalue, is_array).
fn binding_fields(p: &str, b: &Binding) -> Vec<(String, Direction, u64, String, bool)> {
    let var = format!("kat_v_{p}");
    let mut v = Vec::new();
    let mut push = |name: String, dir: Access, len: u64, expr: String, arr: bool| match dir {
        Access::In => v.push((name, Direction::In, len, expr, arr)),
        Access::Out => v.push((name, Direction::Out, len, expr, arr)),
        Access::InOut => {
            v.push((name.clone(), Direction::In, len, expr.clone(), arr));
            v.push((format!("{name}_out"), Direction::Out, len, expr, arr));
        }
    };
    match b {
        Binding::Scalar { size, .. } => push(p.to_string(), Access::In, *size, var, false),
        Binding::Array { bytes, dir, .. } => push(p.to_string(), *dir, *bytes, var, true),
        Binding::Cell { size, dir, .. } => push(p.to_string(), *dir, *size, var, true),
        Binding::Aggregate { leaves, dir, .. } => {
            for (joined, access, bytes) in leaves {
                push(format!("{p}_{joined}"), *dir, *bytes, format!("{var}.{access}"), false);
            }
        }
    }
    v
}

struct Plan {
    decls: Vec<String>,
    args: Vec<String>,
    fields: Vec<(String, Direction, u64, String, bool)>,
    ret: Option<(String, u64)>,
}

fn plan(unit: &SourceUnit, top_fn: &str) -> Result<Plan, VerifyError> {
    let f = unit.require_function(top_fn)?;
    let mut decls = Vec::new();
    let mut args = Vec::new();
    let mut fields = Vec::new();
    for p in &f.params {
        let b = bind_param(unit, f, p)?;
        let var = format!("kat_v_{}", p.name);
        match &b {
            Binding::Scalar { ty, .. } => {
                decls.push(format!("static {ty} {var};"));
                args.push(var.clone());
            }
            Binding::Array { ty, dims, .. } => {
                let d: String = dims.iter().map(|d| format!("[{d}]")).collect();
                decls.push(format!("static {ty} {var}{d};"));
                args.push(var.clone());
            }
            Binding::Cell { ty, .. } => {
                decls.push(format!("static {ty} {var}[1];"));
                args.push(var.clone());
            }
            Binding::Aggregate { ty, by_value, .. } => {
                decls.push(format!("static {ty} {var};"));
                args.push(if *by_value { var.clone() } else { format!("&{var}") });
            }
        }
        fields.extend(binding_fields(&p.name, &b));
    }
    let rt = normalize_type(&f.return_type.replace("inline", ""));
    let ret = if rt == "void" {
        None
    } else {
        let (size, _) = unit.scalar_info(&rt).ok_or_else(|| VerifyError::SchemaBindingError("return value".into()))?;
        decls.push(format!("static {rt} kat_v_ret;"));
        fields.push(("ret".to_string(), Direction::Out, size, "kat_v_ret".to_string(), false));
        Some((rt, size))
    };
    Ok(Plan { decls, args, fields, ret })
}

/// Field schema implied by the top function's interface: inputs in
/// parameter order, then outputs, then the return value.
pub fn infer_schema(unit: &SourceUnit, top_fn: &str) -> Result<Schema, VerifyError> {
    let p = plan(unit, top_fn)?;
    let mut schema: Schema = Vec::new();
    for dir in [Direction::In, Direction::Out] {
        for (name, d, len, _, _) in &p.fields {
            if *d == dir {
                schema.push(FieldSpec { name: name.clone(), direction: dir, len: *len as usize });
            }
        }
    }
    Ok(schema)
}

/// Functions the harness calls once before the first case.
pub fn entry_initializers(unit: &SourceUnit) -> Vec<String> {
    unit.functions
        .iter()
        .filter(|f| !unit.call_edges.iter().any(|e| e.callee == f.name))
        .filter(|f| is_init_function(unit, &f.name).is_ok_and(|c| c.is_init))
        .map(|f| f.name.clone())
        .collect()
}

/// Harness fragment to append to the kernel text.
pub fn gen_harness(unit: &SourceUnit, top_fn: &str, schema: &[FieldSpec]) -> Result<String, VerifyError> {
    let p = plan(unit, top_fn)?;
    let f = unit.require_function(top_fn)?;
    // every parameter's fields must appear in the schema with the same shape
    for param in &f.params {
        let prefix_matches = |name: &str| name == param.name || name.starts_with(&format!("{}_", param.name));
        for (name, dir, len, _, _) in p.fields.iter().filter(|x| prefix_matches(&x.0)) {
            let ok = schema.iter().any(|s| &s.name == name && s.direction == *dir && s.len as u64 == *len);
            if !ok {
                return Err(VerifyError::SchemaBindingError(param.name.clone()));
            }
        }
    }
    for s in schema {
        if !p.fields.iter().any(|(n, d, l, _, _)| n == &s.name && *d == s.direction && *l == s.len as u64) {
            return Err(VerifyError::SchemaBindingError(s.name.clone()));
        }
    }
    let lookup = |name: &str| p.fields.iter().find(|x| x.0 == name).expect("checked above");

    let mut c = String::new();
    c.push_str("\n/* KAT harness */\n#include <stdio.h>\n#include <stdlib.h>\n#include <string.h>\n\n");
    c.push_str(HELPERS);
    c.push_str("int main(void)\n{\n    long kat_n = 0;\n    long kat_i;\n");
    for d in &p.decls {
        c.push_str(&format!("    {d}\n"));
    }
    c.push_str("    if (scanf(\"%ld\", &kat_n) != 1 || kat_n < 0) {\n        fprintf(stderr, \"bad case count\\n\");\n        return 3;\n    }\n");
    c.push_str("    kat_end_line();\n");
    for init in entry_initializers(unit) {
        c.push_str(&format!("    {init}();\n"));
    }
    c.push_str("    for (kat_i = 0; kat_i < kat_n; kat_i++) {\n");
    for d in &p.decls {
        let var = d.split_whitespace().find(|w| w.starts_with("kat_v_")).unwrap();
        let var = var.split(['[', ';']).next().unwrap();
        c.push_str(&format!("        memset(&{var}, 0, sizeof({var}));\n"));
    }
    for s in schema.iter().filter(|s| s.direction == Direction::In) {
        let (_, _, len, expr, arr) = lookup(&s.name);
        let addr = if *arr { expr.clone() } else { format!("&{expr}") };
        c.push_str(&format!("        kat_read_hex((unsigned char *)({addr}), sizeof({expr}), {len});\n"));
    }
    let call = format!("{top_fn}({})", p.args.join(", "));
    if p.ret.is_some() {
        c.push_str(&format!("        kat_v_ret = {call};\n"));
    } else {
        c.push_str(&format!("        {call};\n"));
    }
    for s in schema.iter().filter(|s| s.direction == Direction::Out) {
        let (_, _, len, expr, arr) = lookup(&s.name);
        let addr = if *arr { expr.clone() } else { format!("&{expr}") };
        c.push_str(&format!("        kat_write_hex((const unsigned char *)({addr}), sizeof({expr}), {len});\n"));
    }
    c.push_str("        putchar('\\n');\n    }\n    fflush(stdout);\n    return 0;\n}\n");
    Ok(c)
}

const HELPERS: &str = r#"static int kat_hex_digit(int c)
{
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

static void kat_end_line(void)
{
    int c = getchar();
    if (c == '\r') c = getchar();
    if (c != '\n' && c != EOF) {
        fprintf(stderr, "malformed input line\n");
        exit(3);
    }
}

static void kat_read_hex(unsigned char *dst, size_t size, size_t expect)
{
    size_t i;
    if (size != expect) {
        fprintf(stderr, "field size %lu differs from schema %lu\n", (unsigned long)size, (unsigned long)expect);
        exit(4);
    }
    for (i = 0; i < size; i++) {
        int hi = kat_hex_digit(getchar());
        int lo = kat_hex_digit(getchar());
        if (hi < 0 || lo < 0) {
            fprintf(stderr, "malformed hex input\n");
            exit(3);
        }
        dst[i] = (unsigned char)(hi * 16 + lo);
    }
    kat_end_line();
}

static void kat_write_hex(const unsigned char *src, size_t size, size_t expect)
{
    size_t i;
    if (size != expect) {
        fprintf(stderr, "field size %lu differs from schema %lu\n", (unsigned long)size, (unsigned long)expect);
        exit(4);
    }
    for (i = 0; i < size; i++) {
        printf("%02x", src[i]);
    }
    putchar('\n');
}

"#;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csrc::parse_unit;

    #[test]
    fn directions_from_usage() {
        let u = parse_unit(
            "int f(const int a[4], int b[4], int c[2], int s, int *p){ b[0] = a[0]; c[1] += s; *p = 1; return 0; }\n",
        )
        .unwrap();
        let names: Vec<_> = infer_schema(&u, "f").unwrap().iter().map(|f| format!("{}:{}:{}", f.name, f.direction, f.len)).collect();
        assert_eq!(names, ["a:in:16", "c:in:8", "s:in:4", "b:out:16", "c_out:out:8", "p:out:4", "ret:out:4"]);
    }

    #[test]
    fn missing_schema_field_is_binding_error() {
        let u = parse_unit("void f(const int a[4], int b[4]){ b[0] = a[0]; }\n").unwrap();
        let mut s = infer_schema(&u, "f").unwrap();
        s.remove(0);
        assert_eq!(gen_harness(&u, "f", &s), Err(VerifyError::SchemaBindingError("a".into())));
    }

    #[test]
    fn unbounded_array_cannot_bind() {
        let u = parse_unit("void f(int a[], int n){ a[0] = n; }\n").unwrap();
        assert_eq!(infer_schema(&u, "f"), Err(VerifyError::SchemaBindingError("a".into())));
    }
}
