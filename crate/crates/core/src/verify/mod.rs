//! Known-answer tests, the C toolchain adapter and harness generation.

pub mod generate;
pub mod harness;
pub mod kat;
pub mod toolchain;

use thiserror::Error;

use crate::csrc::CsrcError;

pub use generate::{build_with_harness, gen_kats, random_inputs};
pub use harness::{entry_initializers, gen_harness, infer_schema};
pub use kat::{load_kats, parse_schema, schema_to_string as schema_string, Direction, FieldSpec, KatCase, KatOutcome, KatSuite, Mismatch, Schema};
pub use toolchain::{build, run_harness, run_kats, BuildResult, SourceFile, ToolchainConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("case {0} does not match the field schema")]
    SchemaMismatch(usize),
    #[error("compiler not found: {0}")]
    CompilerNotFound(String),
    #[error("timed out after {0} s")]
    Timeout(u64),
    #[error("execution failed ({status}): {stderr}")]
    ExecutionFailed { status: String, stderr: String },
    #[error("malformed harness output at case {0}")]
    ProtocolError(usize),
    #[error("cannot bind parameter `{0}` to the field schema")]
    SchemaBindingError(String),
    #[error("reference build failed: {0}")]
    ReferenceBuildFailed(String),
    #[error("invalid toolchain configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Source(#[from] CsrcError),
}
