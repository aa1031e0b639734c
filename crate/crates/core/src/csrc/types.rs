//! Type definitions, primitive sizes and aggregate layouts.

use serde::Serialize;

use super::{SourceUnit, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScalarClass {
    Signed,
    Unsigned,
    Float,
    Double,
    LongDouble,
}

impl ScalarClass {
    pub fn is_floating(self) -> bool {
        matches!(self, ScalarClass::Float | ScalarClass::Double | ScalarClass::LongDouble)
    }
}

const QUALIFIERS: &[&str] = &[
    "const", "volatile", "static", "register", "extern", "inline", "restrict", "auto", "__restrict",
];

/// Drop qualifiers and storage classes, collapse whitespace.
pub fn normalize_type(text: &str) -> String {
    text.split(|c: char| c.is_whitespace())
        .filter(|w| !w.is_empty() && !QUALIFIERS.contains(w))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn primitive_info(text: &str) -> Option<(u64, ScalarClass)> {
    use ScalarClass::*;
    let norm = normalize_type(text);
    let n = norm.as_str();
    Some(match n {
        "char" | "signed char" | "int8_t" => (1, Signed),
        "unsigned char" | "uint8_t" | "_Bool" | "bool" => (1, Unsigned),
        "short" | "short int" | "signed short" | "int16_t" => (2, Signed),
        "unsigned short" | "unsigned short int" | "uint16_t" => (2, Unsigned),
        "int" | "signed" | "signed int" | "int32_t" => (4, Signed),
        "unsigned" | "unsigned int" | "uint32_t" => (4, Unsigned),
        "long" | "long int" | "signed long" | "long long" | "long long int" | "signed long long"
        | "int64_t" | "ssize_t" | "ptrdiff_t" | "intptr_t" => (8, Signed),
        "unsigned long" | "unsigned long int" | "unsigned long long" | "unsigned long long int"
        | "uint64_t" | "size_t" | "uintptr_t" => (8, Unsigned),
        "float" => (4, Float),
        "double" => (8, Double),
        "long double" => (16, LongDouble),
        _ => return None,
    })
}

pub fn primitive_size(text: &str) -> Option<u64> {
    primitive_info(text).map(|(s, _)| s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeDef {
    /// Typedef name, or `struct tag` / `union tag` for tagged definitions.
    pub name: String,
    pub span: Span,
    pub kind: TypeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TypeKind {
    Alias { target: String, pointer_depth: usize, dims: Vec<Option<u64>> },
    Aggregate { is_union: bool, fields: Vec<Field> },
    Enum,
    FnPointer,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Field {
    pub name: String,
    pub ty: FieldType,
    pub pointer_depth: usize,
    pub dims: Vec<Option<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FieldType {
    Named(String),
    Inline { is_union: bool, fields: Vec<Field> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Resolved {
    Scalar { size: u64, class: ScalarClass },
    Aggregate { name: String, is_union: bool, fields: Vec<Field> },
    Void,
    /// Pointer typedefs, function pointers and anything unknown.
    Opaque,
}

/// One primitive slot reachable inside an aggregate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Leaf {
    /// Member names from the aggregate root, union members included.
    pub access: Vec<String>,
    /// Components used for flattened names; union members are skipped.
    pub name_path: Vec<String>,
    pub elem_type: String,
    pub elem_size: Option<u64>,
    pub pointer_depth: usize,
    pub dims: Vec<Option<u64>>,
}

impl Leaf {
    pub fn is_array(&self) -> bool {
        !self.dims.is_empty()
    }

    pub fn is_bounded(&self) -> bool {
        self.pointer_depth == 0 && self.dims.iter().all(Option::is_some)
    }

    pub fn element_count(&self) -> u64 {
        self.dims.iter().map(|d| d.unwrap_or(0)).product()
    }

    pub fn byte_len(&self) -> Option<u64> {
        if !self.is_bounded() {
            return None;
        }
        Some(self.elem_size? * self.element_count())
    }

    pub fn joined_name(&self) -> String {
        self.name_path.join("_")
    }

    pub fn dims_text(&self) -> String {
        self.dims
            .iter()
            .map(|d| format!("[{}]", d.map(|v| v.to_string()).unwrap_or_default()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayoutError {
    TooDeep(String),
    ArrayOfAggregates(String),
    Unresolved(String),
}

impl SourceUnit {
    pub fn find_type(&self, name: &str) -> Option<&TypeDef> {
        self.types.iter().find(|t| t.name == name)
    }

    /// Resolve a type text (without pointer stars) through typedefs.
    pub fn resolve_type(&self, text: &str) -> Resolved {
        let mut name = normalize_type(text);
        for _ in 0..32 {
            if name == "void" {
                return Resolved::Void;
            }
            if let Some((size, class)) = primitive_info(&name) {
                return Resolved::Scalar { size, class };
            }
            let Some(def) = self.find_type(&name) else {
                return Resolved::Opaque;
            };
            match &def.kind {
                TypeKind::Alias { target, pointer_depth: 0, dims } if dims.is_empty() => {
                    name = normalize_type(target);
                }
                TypeKind::Aggregate { is_union, fields } => {
                    return Resolved::Aggregate { name: def.name.clone(), is_union: *is_union, fields: fields.clone() }
                }
                TypeKind::Enum => return Resolved::Scalar { size: 4, class: ScalarClass::Signed },
                _ => return Resolved::Opaque,
            }
        }
        Resolved::Opaque
    }

    pub fn is_aggregate_type(&self, text: &str) -> bool {
        matches!(self.resolve_type(text), Resolved::Aggregate { .. })
    }

    pub fn scalar_info(&self, text: &str) -> Option<(u64, ScalarClass)> {
        match self.resolve_type(text) {
            Resolved::Scalar { size, class } => Some((size, class)),
            _ => None,
        }
    }

    /// Primitive leaves of an aggregate, in declaration order. A union
    /// contributes its first member only.
    pub fn leaves(&self, type_text: &str, max_depth: usize) -> Result<Vec<Leaf>, LayoutError> {
        match self.resolve_type(type_text) {
            Resolved::Aggregate { is_union, fields, .. } => {
                let mut out = Vec::new();
                self.collect_leaves(&fields, is_union, &[], &[], 1, max_depth, &mut out)?;
                Ok(out)
            }
            _ => Err(LayoutError::Unresolved(type_text.to_string())),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn collect_leaves(
        &self,
        fields: &[Field],
        is_union: bool,
        access: &[String],
        names: &[String],
        depth: usize,
        max_depth: usize,
        out: &mut Vec<Leaf>,
    ) -> Result<(), LayoutError> {
        if depth > max_depth {
            return Err(LayoutError::TooDeep(access.join(".")));
        }
        let chosen: &[Field] = if is_union { &fields[..fields.len().min(1)] } else { fields };
        for f in chosen {
            let mut acc = access.to_vec();
            acc.push(f.name.clone());
            let mut nm = names.to_vec();
            if !is_union {
                nm.push(f.name.clone());
            }
            let (sub, sub_union) = match &f.ty {
                FieldType::Inline { is_union, fields } => (Some(fields.clone()), *is_union),
                FieldType::Named(t) if f.pointer_depth == 0 => match self.resolve_type(t) {
                    Resolved::Aggregate { is_union, fields, .. } => (Some(fields), is_union),
                    _ => (None, false),
                },
                FieldType::Named(_) => (None, false),
            };
            match sub {
                Some(sub_fields) => {
                    if !f.dims.is_empty() {
                        return Err(LayoutError::ArrayOfAggregates(acc.join(".")));
                    }
                    self.collect_leaves(&sub_fields, sub_union, &acc, &nm, depth + 1, max_depth, out)?;
                }
                None => {
                    let FieldType::Named(t) = &f.ty else { unreachable!() };
                    let elem_size = if f.pointer_depth > 0 { Some(8) } else { self.scalar_info(t).map(|s| s.0) };
                    out.push(Leaf {
                        access: acc,
                        name_path: nm,
                        elem_type: t.clone(),
                        elem_size,
                        pointer_depth: f.pointer_depth,
                        dims: f.dims.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}
