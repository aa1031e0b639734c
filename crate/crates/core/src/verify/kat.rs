//! rsp-style known-answer-test files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::VerifyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::In => "in",
            Direction::Out => "out",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub direction: Direction,
    pub len: usize,
}

impl FieldSpec {
    pub fn new(name: &str, direction: Direction, len: usize) -> Self {
        FieldSpec { name: name.to_string(), direction, len }
    }
}

pub type Schema = Vec<FieldSpec>;

pub fn schema_to_string(schema: &[FieldSpec]) -> String {
    schema.iter().map(|f| format!("{}:{}:{}", f.name, f.direction, f.len)).collect::<Vec<_>>().join(",")
}

pub fn parse_schema(text: &str) -> Result<Schema, String> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|part| {
            let bits: Vec<_> = part.trim().split(':').collect();
            let [name, dir, len] = bits[..] else {
                return Err(format!("bad schema entry `{part}`"));
            };
            let direction = match dir {
                "in" => Direction::In,
                "out" => Direction::Out,
                _ => return Err(format!("bad direction `{dir}`")),
            };
            let len = len.parse().map_err(|_| format!("bad length `{len}`"))?;
            Ok(FieldSpec { name: name.to_string(), direction, len })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KatCase {
    pub count: u64,
    pub values: BTreeMap<String, Vec<u8>>,
}

impl KatCase {
    pub fn get(&self, field: &str) -> &[u8] {
        self.values.get(field).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KatSuite {
    pub seed: Option<u64>,
    pub field_schema: Schema,
    pub cases: Vec<KatCase>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub case: usize,
    pub field: String,
    pub expected: String,
    pub actual: String,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "case {} field {}: expected {} actual {}", self.case, self.field, self.expected, self.actual)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KatOutcome {
    pub passed: usize,
    pub failed: usize,
    pub first_mismatch: Option<Mismatch>,
}

impl KatOutcome {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }
}

/// Direction for a field in a file without a schema header: `ret` and
/// names ending in `_out` are outputs, everything else an input.
fn guess_direction(name: &str) -> Direction {
    if name == "ret" || name.ends_with("_out") {
        Direction::Out
    } else {
        Direction::In
    }
}

/// Line number, count and field values of a case before schema checks.
type RawCase = (usize, u64, Vec<(String, Vec<u8>)>);

impl KatSuite {
    pub fn empty(schema: Schema, seed: Option<u64>) -> Self {
        KatSuite { seed, field_schema: schema, cases: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn inputs(&self) -> impl Iterator<Item = &FieldSpec> {
        self.field_schema.iter().filter(|f| f.direction == Direction::In)
    }

    pub fn outputs(&self) -> impl Iterator<Item = &FieldSpec> {
        self.field_schema.iter().filter(|f| f.direction == Direction::Out)
    }

    pub fn load(path: &Path) -> Result<KatSuite, VerifyError> {
        let text = std::fs::read_to_string(path).map_err(|e| VerifyError::Io(format!("{}: {e}", path.display())))?;
        KatSuite::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), VerifyError> {
        std::fs::write(path, self.to_rsp()).map_err(|e| VerifyError::Io(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<KatSuite, VerifyError> {
        let perr = |line: usize, reason: &str| VerifyError::ParseError { line, reason: reason.to_string() };
        let mut seed = None;
        let mut header_schema: Option<Schema> = None;
        let mut raw: Vec<RawCase> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let ln = i + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                let c = c.trim();
                if let Some(v) = c.strip_prefix("seed") {
                    let v = v.trim_start().strip_prefix('=').ok_or_else(|| perr(ln, "malformed seed header"))?;
                    seed = Some(v.trim().parse().map_err(|_| perr(ln, "seed is not an unsigned integer"))?);
                } else if let Some(v) = c.strip_prefix("schema") {
                    let v = v.trim_start().strip_prefix('=').ok_or_else(|| perr(ln, "malformed schema header"))?;
                    header_schema = Some(parse_schema(v).map_err(|r| perr(ln, &r))?);
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| perr(ln, "expected `name = value`"))?;
            let key = key.trim();
            let value = value.trim();
            if key == "count" {
                let n = value.parse().map_err(|_| perr(ln, "count is not an unsigned integer"))?;
                raw.push((ln, n, Vec::new()));
                continue;
            }
            let case = raw.last_mut().ok_or_else(|| perr(ln, "field before the first `count`"))?;
            if key.is_empty() || case.2.iter().any(|(k, _)| k == key) {
                return Err(perr(ln, "empty or duplicate field name"));
            }
            if value.len() % 2 != 0 {
                return Err(perr(ln, "odd-length hex"));
            }
            let bytes = hex::decode(value).map_err(|_| perr(ln, "invalid hex digit"))?;
            case.2.push((key.to_string(), bytes));
        }

        let schema = match header_schema {
            Some(s) => s,
            None => match raw.first() {
                Some((_, _, fields)) => fields
                    .iter()
                    .map(|(k, v)| FieldSpec { name: k.clone(), direction: guess_direction(k), len: v.len() })
                    .collect(),
                None => Vec::new(),
            },
        };
        let mut cases = Vec::with_capacity(raw.len());
        for (idx, (ln, count, fields)) in raw.into_iter().enumerate() {
            if count != idx as u64 {
                return Err(perr(ln, "case counts must be consecutive from 0"));
            }
            if fields.len() != schema.len() {
                return Err(VerifyError::SchemaMismatch(idx));
            }
            let mut values = BTreeMap::new();
            for (k, v) in fields {
                match schema.iter().find(|f| f.name == k) {
                    Some(f) if f.len == v.len() => {
                        values.insert(k, v);
                    }
                    _ => return Err(VerifyError::SchemaMismatch(idx)),
                }
            }
            cases.push(KatCase { count, values });
        }
        Ok(KatSuite { seed, field_schema: schema, cases })
    }

    pub fn to_rsp(&self) -> String {
        let mut out = String::new();
        if let Some(s) = self.seed {
            out.push_str(&format!("# seed = {s}\n"));
        }
        out.push_str(&format!("# schema = {}\n", schema_to_string(&self.field_schema)));
        for c in &self.cases {
            out.push_str(&format!("\ncount = {}\n", c.count));
            for f in &self.field_schema {
                out.push_str(&format!("{} = {}\n", f.name, hex::encode_upper(c.get(&f.name))));
            }
        }
        out
    }

    /// Compare produced outputs (one map per case) against the suite.
    pub fn compare(&self, actual: &[BTreeMap<String, Vec<u8>>]) -> KatOutcome {
        let mut passed = 0;
        let mut failed = 0;
        let mut first_mismatch = None;
        for (i, case) in self.cases.iter().enumerate() {
            let got = actual.get(i);
            let mut ok = true;
            for f in self.outputs() {
                let want = case.get(&f.name);
                let have = got.and_then(|g| g.get(&f.name)).map(Vec::as_slice).unwrap_or(&[]);
                if want != have {
                    ok = false;
                    if first_mismatch.is_none() {
                        first_mismatch = Some(Mismatch {
                            case: i,
                            field: f.name.clone(),
                            expected: hex::encode_upper(want),
                            actual: hex::encode_upper(have),
                        });
                    }
                    break;
                }
            }
            if ok {
                passed += 1;
            } else {
                failed += 1;
            }
        }
        KatOutcome { passed, failed, first_mismatch }
    }
}

pub fn load_kats(path: &Path) -> Result<KatSuite, VerifyError> {
    KatSuite::load(path)
}
