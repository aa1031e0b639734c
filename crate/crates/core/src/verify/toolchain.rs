//! Compiler invocation and harness execution.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::kat::{FieldSpec, KatOutcome, KatSuite};
use super::VerifyError;
use crate::process::{self, ProcError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToolchainConfig {
    /// Argument vector; `{flags}` expands to `extra_flags`, `{sources}` to
    /// the source paths and `{output}` to the binary path.
    pub compiler_command: Vec<String>,
    pub extra_flags: Vec<String>,
    pub timeout_seconds: u64,
}

impl Default for ToolchainConfig {
    fn default() -> Self {
        ToolchainConfig {
            compiler_command: ["cc", "-std=c99", "{flags}", "-o", "{output}", "{sources}", "-lm"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            extra_flags: vec!["-O1".into(), "-fno-builtin".into()],
            timeout_seconds: 60,
        }
    }
}

impl ToolchainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.compiler_command.is_empty() {
            return Err("compiler_command is empty".into());
        }
        for p in ["{sources}", "{output}"] {
            if !self.compiler_command.iter().any(|a| a.contains(p)) {
                return Err(format!("compiler_command lacks the {p} placeholder"));
            }
        }
        if self.timeout_seconds == 0 {
            return Err("timeout_seconds must be positive".into());
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_seconds)
    }

    fn argv(&self, sources: &[PathBuf], output: &Path) -> Vec<String> {
        let mut argv = Vec::new();
        for a in &self.compiler_command {
            match a.as_str() {
                "{flags}" => argv.extend(self.extra_flags.iter().cloned()),
                "{sources}" => argv.extend(sources.iter().map(|s| s.display().to_string())),
                _ => argv.push(a.replace("{output}", &output.display().to_string())),
            }
        }
        argv
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub name: String,
    pub text: String,
}

impl SourceFile {
    pub fn new(name: &str, text: impl Into<String>) -> Self {
        SourceFile { name: name.to_string(), text: text.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BuildResult {
    Success { binary: PathBuf, stderr: String },
    CompileFailed { stderr: String },
}

impl BuildResult {
    pub fn binary(&self) -> Option<&Path> {
        match self {
            BuildResult::Success { binary, .. } => Some(binary),
            BuildResult::CompileFailed { .. } => None,
        }
    }
}

/// Write `sources` into `workdir`, compile every `.c` file into one binary.
/// Headers (any other extension) are written but not passed to the compiler.
pub fn build(sources: &[SourceFile], toolchain: &ToolchainConfig, workdir: &Path) -> Result<BuildResult, VerifyError> {
    toolchain.validate().map_err(VerifyError::Config)?;
    std::fs::create_dir_all(workdir).map_err(|e| VerifyError::Io(e.to_string()))?;
    let mut paths = Vec::new();
    for s in sources {
        let p = workdir.join(&s.name);
        std::fs::write(&p, &s.text).map_err(|e| VerifyError::Io(format!("{}: {e}", p.display())))?;
        if s.name.ends_with(".c") {
            paths.push(PathBuf::from(&s.name));
        }
    }
    let output = PathBuf::from("kat_bin");
    let argv = toolchain.argv(&paths, &output);
    let out = process::run(&argv[0], &argv[1..], workdir, b"", toolchain.timeout()).map_err(|e| match e {
        ProcError::NotFound(c) => VerifyError::CompilerNotFound(c),
        ProcError::Timeout => VerifyError::Timeout(toolchain.timeout_seconds),
        ProcError::Io(e) => VerifyError::Io(e.to_string()),
    })?;
    let stderr = out.stderr_text();
    if out.status.success() && workdir.join(&output).exists() {
        Ok(BuildResult::Success { binary: workdir.join(output), stderr })
    } else {
        let stderr = if stderr.trim().is_empty() { format!("compiler exited with {}", out.status) } else { stderr };
        Ok(BuildResult::CompileFailed { stderr })
    }
}

/// Encode input fields of `cases` in the harness wire format.
pub fn encode_inputs(schema: &[FieldSpec], cases: &[BTreeMap<String, Vec<u8>>]) -> Vec<u8> {
    let mut s = format!("{}\n", cases.len());
    for c in cases {
        for f in schema.iter().filter(|f| f.direction == super::Direction::In) {
            s.push_str(&hex::encode(c.get(&f.name).map(Vec::as_slice).unwrap_or(&[])));
            s.push('\n');
        }
    }
    s.into_bytes()
}

/// Run a harness binary and decode its per-case output fields.
pub fn run_harness(
    binary: &Path,
    schema: &[FieldSpec],
    cases: &[BTreeMap<String, Vec<u8>>],
    timeout: Duration,
) -> Result<Vec<BTreeMap<String, Vec<u8>>>, VerifyError> {
    let input = encode_inputs(schema, cases);
    let cwd = binary.parent().unwrap_or(Path::new("."));
    let prog = binary.canonicalize().unwrap_or_else(|_| binary.to_path_buf());
    let out = process::run(&prog.display().to_string(), &[], cwd, &input, timeout).map_err(|e| match e {
        ProcError::NotFound(c) => VerifyError::ExecutionFailed { status: format!("cannot execute {c}"), stderr: String::new() },
        ProcError::Timeout => VerifyError::Timeout(timeout.as_secs()),
        ProcError::Io(e) => VerifyError::Io(e.to_string()),
    })?;
    if !out.status.success() {
        return Err(VerifyError::ExecutionFailed { status: out.status.to_string(), stderr: out.stderr_text() });
    }
    decode_outputs(&out.stdout_text(), schema, cases.len())
}

/// Parse harness output: per case, one hex line per output field, then a blank line.
pub fn decode_outputs(text: &str, schema: &[FieldSpec], n_cases: usize) -> Result<Vec<BTreeMap<String, Vec<u8>>>, VerifyError> {
    let outs: Vec<&FieldSpec> = schema.iter().filter(|f| f.direction == super::Direction::Out).collect();
    let mut lines = text.lines();
    let mut result = Vec::with_capacity(n_cases);
    for case in 0..n_cases {
        let mut m = BTreeMap::new();
        for f in &outs {
            let line = lines.next().ok_or(VerifyError::ProtocolError(case))?.trim_end();
            let bytes = hex::decode(line).map_err(|_| VerifyError::ProtocolError(case))?;
            if bytes.len() != f.len {
                return Err(VerifyError::ProtocolError(case));
            }
            m.insert(f.name.clone(), bytes);
        }
        match lines.next() {
            Some(l) if l.trim().is_empty() => {}
            _ => return Err(VerifyError::ProtocolError(case)),
        }
        result.push(m);
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(VerifyError::ProtocolError(n_cases));
    }
    Ok(result)
}

/// Run the suite's inputs through `binary` and compare every output field.
pub fn run_kats(binary: &Path, suite: &KatSuite, timeout: Duration) -> Result<KatOutcome, VerifyError> {
    let inputs: Vec<_> = suite.cases.iter().map(|c| c.values.clone()).collect();
    let actual = run_harness(binary, &suite.field_schema, &inputs, timeout)?;
    Ok(suite.compare(&actual))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::Direction;

    #[test]
    fn argv_expansion() {
        let tc = ToolchainConfig::default();
        let argv = tc.argv(&[PathBuf::from("a.c"), PathBuf::from("b.c")], Path::new("out"));
        assert_eq!(argv, ["cc", "-std=c99", "-O1", "-fno-builtin", "-o", "out", "a.c", "b.c", "-lm"]);
    }

    #[test]
    fn template_needs_placeholders() {
        let tc = ToolchainConfig { compiler_command: vec!["cc".into()], ..Default::default() };
        assert!(tc.validate().is_err());
        assert!(ToolchainConfig::default().validate().is_ok());
    }

    #[test]
    fn decode_checks_framing() {
        let schema = vec![FieldSpec::new("x", Direction::In, 1), FieldSpec::new("y", Direction::Out, 2)];
        let ok = decode_outputs("0102\n\n0304\n\n", &schema, 2).unwrap();
        assert_eq!(ok[1]["y"], [3, 4]);
        assert_eq!(decode_outputs("0102\n0304\n", &schema, 2), Err(VerifyError::ProtocolError(0)));
        assert_eq!(decode_outputs("0102\n\n03\n\n", &schema, 2), Err(VerifyError::ProtocolError(1)));
        assert_eq!(decode_outputs("0102\n\n", &schema, 2), Err(VerifyError::ProtocolError(1)));
        assert_eq!(decode_outputs("", &schema, 0).unwrap().len(), 0);
    }
}
