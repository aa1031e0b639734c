//! Seeded KAT generation from a reference implementation.

use std::collections::BTreeMap;
use std::path::Path;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use super::harness::gen_harness;
use super::kat::{Direction, FieldSpec, KatCase, KatSuite};
use super::toolchain::{build, run_harness, BuildResult, SourceFile, ToolchainConfig};
use super::VerifyError;
use crate::csrc::SourceUnit;

/// Pseudorandom input fields for `n_cases` cases, drawn in schema order.
pub fn random_inputs(schema: &[FieldSpec], n_cases: usize, seed: u64) -> Vec<BTreeMap<String, Vec<u8>>> {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    (0..n_cases)
        .map(|_| {
            schema
                .iter()
                .filter(|f| f.direction == Direction::In)
                .map(|f| {
                    let mut b = vec![0u8; f.len];
                    rng.fill_bytes(&mut b);
                    (f.name.clone(), b)
                })
                .collect()
        })
        .collect()
}

/// Build `unit` with a generated harness in `workdir`.
pub fn build_with_harness(
    unit: &SourceUnit,
    top_fn: &str,
    schema: &[FieldSpec],
    extra: &[SourceFile],
    toolchain: &ToolchainConfig,
    workdir: &Path,
) -> Result<BuildResult, VerifyError> {
    let harness = gen_harness(unit, top_fn, schema)?;
    let mut sources = extra.to_vec();
    sources.push(SourceFile::new("kat_main.c", format!("{}{}", unit.text(), harness)));
    build(&sources, toolchain, workdir)
}

/// Generate a suite by running the reference implementation on seeded inputs.
#[allow(clippy::too_many_arguments)]
pub fn gen_kats(
    unit: &SourceUnit,
    top_fn: &str,
    schema: &[FieldSpec],
    n_cases: usize,
    seed: u64,
    extra: &[SourceFile],
    toolchain: &ToolchainConfig,
    workdir: &Path,
) -> Result<KatSuite, VerifyError> {
    let inputs = random_inputs(schema, n_cases, seed);
    let binary = match build_with_harness(unit, top_fn, schema, extra, toolchain, workdir)? {
        BuildResult::Success { binary, .. } => binary,
        BuildResult::CompileFailed { stderr } => return Err(VerifyError::ReferenceBuildFailed(stderr)),
    };
    let outputs = run_harness(&binary, schema, &inputs, toolchain.timeout())?;
    let cases = inputs
        .into_iter()
        .zip(outputs)
        .enumerate()
        .map(|(i, (mut ins, outs))| {
            ins.extend(outs);
            KatCase { count: i as u64, values: ins }
        })
        .collect();
    Ok(KatSuite { seed: Some(seed), field_schema: schema.to_vec(), cases })
}
