//! Kernels: a sliced target function with its KAT suite.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LoopError;
use crate::csrc::{parse_unit, CsrcError, SourceUnit};
use crate::llm::{bindings, LlmSession, LlmSettings, PromptSet, TemplateId};
use crate::verify::{
    build_with_harness, gen_harness, gen_kats, infer_schema, parse_schema, run_kats, schema_string, BuildResult,
    KatOutcome, KatSuite, Schema, SourceFile, ToolchainConfig,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub name: String,
    pub unit: SourceUnit,
    pub top_fn: String,
    pub suite: KatSuite,
    pub schema: Schema,
    /// Headers the unit includes by quoted name, e.g. generated constant tables.
    pub headers: Vec<SourceFile>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelManifest {
    pub name: String,
    pub top_fn: String,
    pub schema: String,
    pub cases: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub headers: Vec<String>,
}

pub const MANIFEST: &str = "kernel.json";
pub const SOURCE: &str = "kernel.c";
pub const HARNESS: &str = "harness.c";
pub const KATS: &str = "kats.rsp";

fn io_err(p: &Path, e: impl std::fmt::Display) -> LoopError {
    LoopError::Io(format!("{}: {e}", p.display()))
}

impl Kernel {
    pub fn with_unit(&self, unit: SourceUnit) -> Kernel {
        Kernel { unit, ..self.clone() }
    }

    /// Build the unit with its harness and replay the suite.
    pub fn self_test(&self, toolchain: &ToolchainConfig, workdir: &Path) -> Result<KatOutcome, LoopError> {
        match build_with_harness(&self.unit, &self.top_fn, &self.schema, &self.headers, toolchain, workdir)? {
            BuildResult::Success { binary, .. } => Ok(run_kats(&binary, &self.suite, toolchain.timeout())?),
            BuildResult::CompileFailed { stderr } => Err(LoopError::KernelSelfTestFailed(format!("build failed:\n{stderr}"))),
        }
    }

    /// Write the bundle: source, harness, KATs, headers and a manifest.
    pub fn save(&self, dir: &Path) -> Result<(), LoopError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let write = |name: &str, text: &str| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| io_err(&p, e))
        };
        write(SOURCE, self.unit.text())?;
        write(HARNESS, &gen_harness(&self.unit, &self.top_fn, &self.schema)?)?;
        write(KATS, &self.suite.to_rsp())?;
        for h in &self.headers {
            write(&h.name, &h.text)?;
        }
        let manifest = KernelManifest {
            name: self.name.clone(),
            top_fn: self.top_fn.clone(),
            schema: schema_string(&self.schema),
            cases: self.suite.len(),
            seed: self.suite.seed,
            headers: self.headers.iter().map(|h| h.name.clone()).collect(),
        };
        write(MANIFEST, &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"))
    }

    pub fn load(dir: &Path) -> Result<Kernel, LoopError> {
        let read = |name: &str| {
            let p = dir.join(name);
            std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))
        };
        let manifest: KernelManifest =
            serde_json::from_str(&read(MANIFEST)?).map_err(|e| io_err(&dir.join(MANIFEST), e))?;
        let schema = parse_schema(&manifest.schema).map_err(|e| io_err(&dir.join(MANIFEST), e))?;
        let unit = parse_unit(&read(SOURCE)?)?;
        let suite = KatSuite::load(&dir.join(KATS))?;
        if suite.field_schema != schema {
            return Err(LoopError::Io(format!("{}: KAT schema differs from the manifest", dir.display())));
        }
        let headers =
            manifest.headers.iter().map(|h| Ok(SourceFile::new(h, read(h)?))).collect::<Result<Vec<_>, LoopError>>()?;
        unit.require_function(&manifest.top_fn)?;
        Ok(Kernel { name: manifest.name, unit, top_fn: manifest.top_fn, suite, schema, headers })
    }
}

/// Concatenate a codebase into one unit: headers first, then sources, with
/// quoted includes of codebase files dropped.
pub fn amalgamate(files: &[SourceFile]) -> String {
    let names: Vec<&str> = files.iter().map(|f| f.name.rsplit('/').next().unwrap_or(&f.name)).collect();
    let is_local_include = |line: &str| {
        let t = line.trim_start();
        let Some(rest) = t.strip_prefix('#') else { return false };
        let rest = rest.trim_start();
        let Some(rest) = rest.strip_prefix("include") else { return false };
        let rest = rest.trim();
        rest.starts_with('"') && names.iter().any(|n| rest.trim_matches('"').rsplit('/').next() == Some(n))
    };
    let mut ordered: Vec<&SourceFile> = files.iter().filter(|f| !f.name.ends_with(".c")).collect();
    ordered.extend(files.iter().filter(|f| f.name.ends_with(".c")));
    let mut out = String::new();
    for f in ordered {
        for line in f.text.split_inclusive('\n') {
            if !is_local_include(line) {
                out.push_str(line);
            }
        }
        if !out.ends_with('\n') {
            out.push('\n');
        }
    }
    out
}

/// LLM help for dependencies missing from the codebase.
pub struct ExtractionAssist<'a> {
    pub session: &'a mut LlmSession,
    pub prompts: &'a PromptSet,
    pub settings: LlmSettings,
    pub max_rounds: u32,
}

/// Slice `target` out of `codebase`, infer its schema, generate KATs from the
/// reference and check the reference passes them.
#[allow(clippy::too_many_arguments)]
pub fn extract_kernel(
    codebase: &[SourceFile],
    target: &str,
    n_kats: usize,
    seed: u64,
    toolchain: &ToolchainConfig,
    workdir: &Path,
    mut assist: Option<ExtractionAssist<'_>>,
) -> Result<Kernel, LoopError> {
    let mut text = amalgamate(codebase);
    let mut rounds = 0;
    let slice = loop {
        let unit = parse_unit(&text)?;
        unit.require_function(target)?;
        match unit.extract_slice(target, &[]) {
            Ok(s) => break s,
            Err(CsrcError::UnresolvedDependency(dep)) => {
                let Some(a) = assist.as_mut().filter(|a| rounds < a.max_rounds) else {
                    return Err(CsrcError::UnresolvedDependency(dep).into());
                };
                rounds += 1;
                let prompt = a.prompts.render(
                    TemplateId::Extraction,
                    &bindings([("top", target), ("missing", dep.as_str()), ("code", text.as_str())]),
                )?;
                let ex = a.session.request(&prompt, &a.settings)?;
                text = ex.extracted_code.ok_or(crate::llm::LlmError::NoCodeFound)?;
            }
            Err(e) => return Err(e.into()),
        }
    };
    let unit = parse_unit(&slice)?;
    let schema = infer_schema(&unit, target)?;
    let suite = gen_kats(&unit, target, &schema, n_kats, seed, &[], toolchain, &workdir.join("reference"))?;
    let kernel = Kernel { name: target.to_string(), unit, top_fn: target.to_string(), suite, schema, headers: Vec::new() };
    let o = kernel.self_test(toolchain, &workdir.join("self_test"))?;
    if !o.all_passed() || o.passed != kernel.suite.len() {
        let why = o.first_mismatch.map(|m| m.to_string()).unwrap_or_else(|| format!("{} of {} passed", o.passed, kernel.suite.len()));
        return Err(LoopError::KernelSelfTestFailed(why));
    }
    Ok(kernel)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn amalgamation_drops_local_includes() {
        let files = [
            SourceFile::new("a.c", "#include \"a.h\"\n#include <stdint.h>\nint f(void) { return K; }\n"),
            SourceFile::new("a.h", "#define K 3\n"),
        ];
        assert_eq!(amalgamate(&files), "#define K 3\n#include <stdint.h>\nint f(void) { return K; }\n");
    }
}
