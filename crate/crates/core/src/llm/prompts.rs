//! Prompt templates with `{{name}}` placeholders.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TemplateId {
    StaticMemory,
    StructExpansion,
    Extraction,
    CorrectiveCompile,
    CorrectiveKat,
    CorrectiveSynth,
    PragmaDse,
}

impl TemplateId {
    pub const ALL: [TemplateId; 7] = [
        TemplateId::StaticMemory,
        TemplateId::StructExpansion,
        TemplateId::Extraction,
        TemplateId::CorrectiveCompile,
        TemplateId::CorrectiveKat,
        TemplateId::CorrectiveSynth,
        TemplateId::PragmaDse,
    ];

    /// File stem used when loading overrides from a template directory.
    pub fn file_stem(self) -> &'static str {
        match self {
            TemplateId::StaticMemory => "static_memory",
            TemplateId::StructExpansion => "struct_expansion",
            TemplateId::Extraction => "extraction",
            TemplateId::CorrectiveCompile => "corrective_compile",
            TemplateId::CorrectiveKat => "corrective_kat",
            TemplateId::CorrectiveSynth => "corrective_synth",
            TemplateId::PragmaDse => "pragma_dse",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_stem())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: String,
}

const CODE_BLOCK: &str = "\n\n```c\n{{code}}\n```\n";

const STATIC_MEMORY: &str = "You are an expert in C code generation. The
following C code contains dynamic memory 
allocation using malloc. Rewrite the code to
eliminate all uses of malloc, using only
static or stack allocation.
If there are any memory frees or functions
that call memoryfrees, remove them as well.
Do not provide main functions or testbenches.
Return only the modified C code. I don't want 
any code explanations.";

const STRUCT_EXPANSION: &str = "Update the code to eliminate the use of 
structs. To eliminate the use of structs, 
unpack their fields into plain variables 
within the top function and use the unpacked
variables as arguments to top_function_hls.
The top function is {{top}}; name the function taking the unpacked variables {{top}}_hls and keep {{top}} with its original signature as a wrapper.
Return only the modified C code.";

const EXTRACTION: &str = "You are an expert in C code generation. Extract the function {{top}} and everything it depends on from the code below into one self-contained C file. Keep the code functionally identical. Provide definitions for these missing dependencies: {{missing}}.
Do not provide main functions or testbenches.
Return only the C code.";

const CORRECTIVE_COMPILE: &str = "The C code below fails to compile. The compiler reported:

{{evidence}}

Fix the code so that it compiles while keeping its behaviour unchanged. Return only the modified C code.";

const CORRECTIVE_KAT: &str = "The C code below compiles, but its outputs differ from the reference implementation on the known-answer tests:

{{evidence}}

Fix the code so that it matches the reference outputs bit for bit. Return only the modified C code.";

const CORRECTIVE_SYNTH: &str = "High-level synthesis of the C code below failed with:

{{evidence}}

Rewrite the code so that it is synthesizable while keeping its behaviour unchanged. Return only the modified C code.";

const PRAGMA_DSE: &str = "You are optimizing the HLS C code below for {{objective}}. Loops of {{top}} that can take pragmas:
{{loops}}

Configurations synthesized so far (plan -> area, latency in cycles):
{{history}}

Propose one new configuration. Answer with one directive per line in the form `function#loop unroll=N` or `function#loop pipeline=II`, or `baseline` for no pragmas.";

fn default_body(id: TemplateId) -> String {
    match id {
        TemplateId::StaticMemory => format!("{STATIC_MEMORY}{CODE_BLOCK}"),
        TemplateId::StructExpansion => format!("{STRUCT_EXPANSION}{CODE_BLOCK}"),
        TemplateId::Extraction => format!("{EXTRACTION}{CODE_BLOCK}"),
        TemplateId::CorrectiveCompile => format!("{CORRECTIVE_COMPILE}{CODE_BLOCK}"),
        TemplateId::CorrectiveKat => format!("{CORRECTIVE_KAT}{CODE_BLOCK}"),
        TemplateId::CorrectiveSynth => format!("{CORRECTIVE_SYNTH}{CODE_BLOCK}"),
        TemplateId::PragmaDse => format!("{PRAGMA_DSE}{CODE_BLOCK}"),
    }
}

/// The full template set, defaults unless overridden from a directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

impl Default for PromptSet {
    fn default() -> Self {
        let templates = TemplateId::ALL.iter().map(|&id| (id, PromptTemplate { id, body: default_body(id) })).collect();
        PromptSet { templates }
    }
}

impl PromptSet {
    /// Defaults, with `<dir>/<stem>.txt` replacing any template it names.
    pub fn load(dir: Option<&Path>) -> Result<Self, LlmError> {
        let mut set = PromptSet::default();
        let Some(dir) = dir else { return Ok(set) };
        for id in TemplateId::ALL {
            let p = dir.join(format!("{}.txt", id.file_stem()));
            if p.exists() {
                let body = std::fs::read_to_string(&p).map_err(|e| LlmError::Io(format!("{}: {e}", p.display())))?;
                set.templates.insert(id, PromptTemplate { id, body });
            }
        }
        Ok(set)
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn render(&self, id: TemplateId, bindings: &BTreeMap<String, String>) -> Result<String, LlmError> {
        render_prompt(self.get(id), bindings)
    }
}

/// Substitute every `{{name}}`. Text inside bindings is not rescanned.
pub fn render_prompt(template: &PromptTemplate, bindings: &BTreeMap<String, String>) -> Result<String, LlmError> {
    let body = &template.body;
    let mut out = String::with_capacity(body.len());
    let mut rest = body.as_str();
    while let Some(open) = rest.find("{{") {
        let Some(close) = rest[open + 2..].find("}}") else { break };
        let name = &rest[open + 2..open + 2 + close];
        if !is_placeholder_name(name) {
            out.push_str(&rest[..open + 2]);
            rest = &rest[open + 2..];
            continue;
        }
        let value = bindings.get(name).ok_or_else(|| LlmError::MissingBinding(name.to_string()))?;
        out.push_str(&rest[..open]);
        out.push_str(value);
        rest = &rest[open + 2 + close + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

fn is_placeholder_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Placeholder names used by a template body.
pub fn placeholders(body: &str) -> Vec<String> {
    let mut names = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find("{{") {
        let Some(close) = rest[open + 2..].find("}}") else { break };
        let name = &rest[open + 2..open + 2 + close];
        if is_placeholder_name(name) && !names.iter().any(|n| n == name) {
            names.push(name.to_string());
        }
        rest = &rest[open + 2 + close + 2..];
    }
    names
}

pub fn bindings<const N: usize>(pairs: [(&str, &str); N]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}
