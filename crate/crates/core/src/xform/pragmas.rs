//! HLS pragma insertion.

use serde::{Deserialize, Serialize};

use super::{rep, Patch, XformError};
use crate::csrc::syntax::{at_line_start, line_indent};
use crate::csrc::SourceUnit;

const RULE: &str = "insert_pragmas";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Unroll(u64),
    Pipeline(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Directive {
    pub function: String,
    /// Index into the function's loops, in source order.
    pub loop_index: usize,
    pub action: Action,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PragmaPlan {
    pub directives: Vec<Directive>,
}

impl PragmaPlan {
    pub fn is_empty(&self) -> bool {
        self.directives.is_empty()
    }

    /// Compact label such as `ntt8#0 unroll=2 pipeline=1`, or `baseline`.
    pub fn label(&self) -> String {
        if self.directives.is_empty() {
            return "baseline".to_string();
        }
        let mut parts: Vec<String> = Vec::new();
        let mut last: Option<(&str, usize)> = None;
        for d in &self.directives {
            let key = (d.function.as_str(), d.loop_index);
            if last != Some(key) {
                parts.push(format!("{}#{}", d.function, d.loop_index));
                last = Some(key);
            }
            parts.push(match d.action {
                Action::Unroll(f) => format!("unroll={f}"),
                Action::Pipeline(ii) => format!("pipeline={ii}"),
            });
        }
        parts.join(" ")
    }
}

/// Directive spelling; `{factor}` and `{ii}` are substituted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PragmaDialect {
    pub unroll: String,
    pub pipeline: String,
}

impl Default for PragmaDialect {
    fn default() -> Self {
        PragmaDialect {
            unroll: "#pragma hls_unroll {factor}".to_string(),
            pipeline: "#pragma hls_pipeline_init_interval {ii}".to_string(),
        }
    }
}

impl PragmaDialect {
    pub fn render(&self, action: Action) -> Option<String> {
        match action {
            Action::Unroll(0) | Action::Unroll(1) => None,
            Action::Unroll(f) => Some(self.unroll.replace("{factor}", &f.to_string())),
            Action::Pipeline(ii) => Some(self.pipeline.replace("{ii}", &ii.to_string())),
        }
    }
}

/// Place each directive on its own line right before the targeted loop.
/// Directives already present there are not repeated.
pub fn insert_pragmas(unit: &SourceUnit, plan: &PragmaPlan, dialect: &PragmaDialect) -> Result<Patch, XformError> {
    let text = unit.text();
    let mut edits = Vec::new();
    for d in &plan.directives {
        let f = unit.require_function(&d.function)?;
        let l = f
            .loops
            .get(d.loop_index)
            .ok_or_else(|| XformError::UnknownLoop { function: d.function.clone(), index: d.loop_index })?;
        let Some(line) = dialect.render(d.action) else { continue };
        if preceding_lines(text, l.span.start).any(|p| p.trim() == line.trim()) {
            continue;
        }
        let pos = l.span.start;
        if at_line_start(text, pos) {
            let ls = text[..pos].rfind('\n').map(|p| p + 1).unwrap_or(0);
            let indent = line_indent(text, pos);
            edits.push(rep(ls, ls, format!("{indent}{line}\n")));
        } else {
            let indent = line_indent(text, pos);
            edits.push(rep(pos, pos, format!("\n{indent}{line}\n{indent}")));
        }
    }
    if edits.is_empty() {
        return Ok(Patch::empty(RULE, "no pragmas to add"));
    }
    Ok(Patch::from_edits(RULE, &plan.label(), edits))
}

/// Directive lines immediately above the line holding `pos`.
fn preceding_lines(text: &str, pos: usize) -> impl Iterator<Item = &str> {
    let ls = text[..pos].rfind('\n').map(|p| p + 1).unwrap_or(0);
    text[..ls]
        .lines()
        .rev()
        .take_while(|l| l.trim_start().starts_with("#pragma"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csrc::parse_unit;
    use crate::xform::apply;

    const SRC: &str = "void f(int a[8])\n{\n    for (int i = 0; i < 8; i++) {\n        a[i] += 1;\n    }\n}\n";

    fn plan(actions: &[Action]) -> PragmaPlan {
        PragmaPlan {
            directives: actions.iter().map(|&action| Directive { function: "f".into(), loop_index: 0, action }).collect(),
        }
    }

    #[test]
    fn inserts_on_line_before_loop() {
        let u = parse_unit(SRC).unwrap();
        let p = insert_pragmas(&u, &plan(&[Action::Unroll(2), Action::Pipeline(1)]), &PragmaDialect::default()).unwrap();
        let out = apply(&u, &p).unwrap();
        assert!(out.render().contains(
            "{\n    #pragma hls_unroll 2\n    #pragma hls_pipeline_init_interval 1\n    for (int i = 0;"
        ));
        assert_eq!(out.functions[0].loops.len(), 1);
    }

    #[test]
    fn idempotent() {
        let u = parse_unit(SRC).unwrap();
        let pl = plan(&[Action::Unroll(4)]);
        let once = apply(&u, &insert_pragmas(&u, &pl, &PragmaDialect::default()).unwrap()).unwrap();
        assert!(insert_pragmas(&once, &pl, &PragmaDialect::default()).unwrap().is_empty());
    }

    #[test]
    fn unroll_one_emits_nothing() {
        let u = parse_unit(SRC).unwrap();
        assert!(insert_pragmas(&u, &plan(&[Action::Unroll(1)]), &PragmaDialect::default()).unwrap().is_empty());
    }

    #[test]
    fn unknown_loop() {
        let u = parse_unit(SRC).unwrap();
        let mut pl = plan(&[Action::Pipeline(1)]);
        pl.directives[0].loop_index = 3;
        assert_eq!(
            insert_pragmas(&u, &pl, &PragmaDialect::default()).unwrap_err(),
            XformError::UnknownLoop { function: "f".into(), index: 3 }
        );
    }

    #[test]
    fn labels() {
        assert_eq!(PragmaPlan::default().label(), "baseline");
        assert_eq!(plan(&[Action::Unroll(2), Action::Pipeline(1)]).label(), "f#0 unroll=2 pipeline=1");
    }
}
