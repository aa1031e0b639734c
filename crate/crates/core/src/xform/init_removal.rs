//! Precompute tables filled by initialization functions and emit them as
//! constant arrays in a generated header.

use std::fmt::Write as _;
use std::path::Path;

use super::static_memory::remove_item;
use super::{delete_statement, rep, tok_at, ConstTable, Patch, XformError};
use crate::blockers::is_init_function;
use crate::csrc::types::ScalarClass;
use crate::csrc::{GlobalInfo, SourceUnit};
use crate::process::{self, ProcError};
use crate::verify::{build, BuildResult, SourceFile, ToolchainConfig, VerifyError};

const RULE: &str = "remove_runtime_init";
const PER_LINE: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitRemoval {
    pub patch: Patch,
    pub tables: Vec<ConstTable>,
    pub header_name: String,
    /// Full header text, including tables from earlier removals.
    pub header_text: String,
}

pub fn consts_header_name(stem: &str) -> String {
    format!("{stem}_consts.h")
}

/// Run `init_fn` natively, capture the globals it fills and rewrite the
/// unit to include them as constants. `existing_header` is the current
/// header text when an earlier removal already created it.
pub fn remove_runtime_init(
    unit: &SourceUnit,
    init_fn: &str,
    stem: &str,
    existing_header: Option<&str>,
    toolchain: &ToolchainConfig,
    workdir: &Path,
) -> Result<InitRemoval, XformError> {
    let check = is_init_function(unit, init_fn)?;
    if !check.is_init {
        return Err(XformError::NotInitFunction(init_fn.to_string()));
    }
    let mut globals: Vec<&GlobalInfo> = Vec::new();
    for name in &check.written_arrays {
        let g = unit.global(name).expect("written arrays are unit globals");
        let shared = g.declarators > 1 || g.pointer_depth > 0 || unit.scalar_info(&g.element_type()).is_none();
        let other_writer = unit.functions.iter().any(|f| f.name != init_fn && f.writes_globals.contains(name));
        if shared || other_writer {
            return Err(XformError::UnsupportedTable(name.clone()));
        }
        globals.push(g);
    }
    globals.sort_by_key(|g| g.span.start);

    let header_name = consts_header_name(stem);
    let mut extra = Vec::new();
    if let Some(h) = existing_header {
        extra.push(SourceFile::new(&header_name, h));
    }
    let values = run_runner(unit, init_fn, &globals, &extra, toolchain, workdir)?;

    let mut tables = Vec::new();
    let mut decls = String::new();
    for (g, vals) in globals.iter().zip(values) {
        let (_, class) = unit.scalar_info(&g.element_type()).expect("checked above");
        let literals = vals
            .iter()
            .map(|v| literal(v, class).ok_or_else(|| XformError::UnsupportedTable(g.name.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(n) = g.element_count {
            if n as usize != literals.len() {
                return Err(XformError::RunnerExecutionFailed(format!("{} produced {} of {n} values", g.name, literals.len())));
            }
        }
        let dims = if g.dims.iter().all(Option::is_some) && !g.dims.is_empty() {
            g.dims.iter().map(|d| format!("[{}]", d.unwrap())).collect::<String>()
        } else {
            format!("[{}]", literals.len())
        };
        let storage = if g.is_static { "static " } else { "" };
        let _ = writeln!(decls, "{storage}const {} {}{dims} = {{", g.element_type(), g.name);
        for chunk in literals.chunks(PER_LINE) {
            let _ = writeln!(decls, "    {},", chunk.join(", "));
        }
        decls.push_str("};\n\n");
        tables.push(ConstTable {
            name: g.name.clone(),
            element_type: g.element_type(),
            length: literals.len(),
            values: literals,
        });
    }
    let header_text = match existing_header {
        Some(h) => append_to_header(h, &decls),
        None => {
            let guard: String = header_name
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
                .collect();
            format!("#ifndef {guard}\n#define {guard}\n\n{decls}#endif\n")
        }
    };

    let patch = rewrite_unit(unit, init_fn, &globals, &header_name)?;
    Ok(InitRemoval { patch, tables, header_name, header_text })
}

fn append_to_header(h: &str, decls: &str) -> String {
    match h.rfind("#endif") {
        Some(pos) => format!("{}{decls}{}", &h[..pos], &h[pos..]),
        None => format!("{h}\n{decls}"),
    }
}

fn rewrite_unit(unit: &SourceUnit, init_fn: &str, globals: &[&GlobalInfo], header_name: &str) -> Result<Patch, XformError> {
    let t = unit.toks();
    let mut edits = Vec::new();
    let already = unit.includes.iter().any(|i| i.name == header_name);
    for (i, g) in globals.iter().enumerate() {
        if i == 0 && !already {
            edits.push(rep(g.span.start, g.span.end, format!("#include \"{header_name}\"")));
        } else {
            edits.push(remove_item(unit.text(), g.span));
        }
    }
    let f = unit.require_function(init_fn)?;
    edits.push(remove_item(unit.text(), f.span));
    for p in unit.prototypes.iter().filter(|p| p.name == init_fn) {
        edits.push(remove_item(unit.text(), p.span));
    }
    for e in unit.call_edges.iter().filter(|e| e.callee == init_fn && e.caller != init_fn) {
        let k = tok_at(unit, e.span.start);
        let close = t.match_close(k + 1).filter(|&c| t.is(c + 1, ";"));
        let Some(close) = close else {
            return Err(XformError::NotInitFunction(init_fn.to_string()));
        };
        edits.push(delete_statement(unit, k, close + 1));
    }
    let names: Vec<&str> = globals.iter().map(|g| g.name.as_str()).collect();
    Ok(Patch::from_edits(RULE, &format!("{init_fn} replaced by constant tables {}", names.join(", ")), edits))
}

fn runner_source(unit: &SourceUnit, init_fn: &str, globals: &[&GlobalInfo]) -> Result<String, XformError> {
    let mut src = unit.extract_slice(init_fn, &[])?;
    src.push_str("\n/* table runner */\n#include <stdio.h>\n\nint main(void)\n{\n    unsigned long runner_i;\n\n");
    let _ = writeln!(src, "    {init_fn}();");
    for g in globals {
        let ty = g.element_type();
        let (_, class) = unit.scalar_info(&ty).expect("checked by caller");
        let (fmt, cast) = match class {
            ScalarClass::Signed => ("%lld", "long long"),
            ScalarClass::Unsigned => ("%llu", "unsigned long long"),
            ScalarClass::Float | ScalarClass::Double => ("%a", "double"),
            ScalarClass::LongDouble => ("%La", "long double"),
        };
        let n = format!("(sizeof({}) / sizeof({ty}))", g.name);
        let _ = write!(
            src,
            "    {{\n        const {ty} *runner_p = (const {ty} *){name};\n        printf(\"@{name} %lu\\n\", (unsigned long){n});\n        for (runner_i = 0; runner_i < {n}; runner_i++)\n            printf(\"{fmt}\\n\", ({cast})runner_p[runner_i]);\n    }}\n",
            name = g.name
        );
    }
    src.push_str("    return 0;\n}\n");
    Ok(src)
}

fn run_runner(
    unit: &SourceUnit,
    init_fn: &str,
    globals: &[&GlobalInfo],
    extra: &[SourceFile],
    toolchain: &ToolchainConfig,
    workdir: &Path,
) -> Result<Vec<Vec<String>>, XformError> {
    let mut sources = vec![SourceFile::new("runner.c", runner_source(unit, init_fn, globals)?)];
    sources.extend(extra.iter().cloned());
    let binary = match build(&sources, toolchain, workdir)? {
        BuildResult::Success { binary, .. } => binary,
        BuildResult::CompileFailed { stderr } => return Err(XformError::RunnerBuildFailed(stderr)),
    };
    let prog = binary.canonicalize().unwrap_or(binary);
    let out = process::run(&prog.display().to_string(), &[], workdir, b"", toolchain.timeout()).map_err(|e| match e {
        ProcError::Timeout => XformError::Verify(VerifyError::Timeout(toolchain.timeout_seconds)),
        ProcError::NotFound(p) => XformError::RunnerExecutionFailed(format!("cannot execute {p}")),
        ProcError::Io(e) => XformError::RunnerExecutionFailed(e.to_string()),
    })?;
    if !out.status.success() {
        return Err(XformError::RunnerExecutionFailed(format!("{}: {}", out.status, out.stderr_text().trim())));
    }
    parse_runner_output(&out.stdout_text(), globals)
}

fn parse_runner_output(text: &str, globals: &[&GlobalInfo]) -> Result<Vec<Vec<String>>, XformError> {
    let fail = |m: String| XformError::RunnerExecutionFailed(m);
    let mut lines = text.lines();
    let mut result = Vec::new();
    for g in globals {
        let head = lines.next().ok_or_else(|| fail(format!("missing table {}", g.name)))?;
        let count: usize = head
            .strip_prefix('@')
            .and_then(|h| h.strip_prefix(g.name.as_str()))
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| fail(format!("bad table header `{head}`")))?;
        let vals: Vec<String> = lines.by_ref().take(count).map(|l| l.trim().to_string()).collect();
        if vals.len() != count {
            return Err(fail(format!("table {} truncated", g.name)));
        }
        result.push(vals);
    }
    Ok(result)
}

/// C literal for one printed value; `None` for non-finite floats.
fn literal(v: &str, class: ScalarClass) -> Option<String> {
    match class {
        ScalarClass::Float | ScalarClass::Double | ScalarClass::LongDouble => {
            let lower = v.to_ascii_lowercase();
            if lower.contains("inf") || lower.contains("nan") || !lower.contains("0x") {
                return None;
            }
            Some(if class == ScalarClass::LongDouble { format!("{v}L") } else { v.to_string() })
        }
        ScalarClass::Signed => {
            let n: i64 = v.parse().ok()?;
            Some(if n == i64::MIN { "(-9223372036854775807LL - 1)".to_string() } else { n.to_string() })
        }
        ScalarClass::Unsigned => {
            let n: u64 = v.parse().ok()?;
            Some(if n > u64::from(u32::MAX) { format!("{n}ULL") } else { n.to_string() })
        }
    }
}
