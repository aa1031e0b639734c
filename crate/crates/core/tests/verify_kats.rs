mod common;

use std::time::Duration;

use common::{c_fixture, check_golden};
use pqc2hls::csrc::parse_unit;
use pqc2hls::verify::{
    build, build_with_harness, gen_harness, gen_kats, infer_schema, run_kats, schema_string, BuildResult, KatSuite,
    SourceFile, ToolchainConfig, VerifyError,
};

const T: Duration = Duration::from_secs(30);

#[test]
fn toy_fft_schema_and_harness_golden() {
    let u = parse_unit(&c_fixture("toy_fft.c")).unwrap();
    let schema = infer_schema(&u, "fft16").unwrap();
    assert_eq!(schema_string(&schema), "in:in:64,out:out:64");
    check_golden("fft16_harness.c", &gen_harness(&u, "fft16", &schema).unwrap());
}

#[test]
fn sampler_schema_includes_prng_state() {
    let u = parse_unit(&c_fixture("sampler.c")).unwrap();
    let schema = infer_schema(&u, "sampler").unwrap();
    check_golden("sampler_schema.txt", &(schema_string(&schema) + "\n"));
    assert!(schema.iter().any(|f| f.name == "ctx_p_state" && f.len == 256));
}

#[test]
fn reference_passes_own_kats_and_bit_flip_is_detected() {
    let tc = ToolchainConfig::default();
    for (file, top) in [("toy_fft.c", "fft16"), ("ntt8.c", "ntt8"), ("sampler.c", "sampler"), ("pair_ctx.c", "scale8"), ("two_tables.c", "twist")] {
        let dir = tempfile::tempdir().unwrap();
        let u = parse_unit(&c_fixture(file)).unwrap();
        let schema = infer_schema(&u, top).unwrap();
        let suite = gen_kats(&u, top, &schema, 50, 7, &[], &tc, &dir.path().join("gen")).unwrap();
        assert_eq!(suite.len(), 50);
        let bin = build_with_harness(&u, top, &schema, &[], &tc, &dir.path().join("chk")).unwrap();
        let bin = bin.binary().unwrap();
        let o = run_kats(bin, &suite, T).unwrap();
        assert_eq!((o.passed, o.failed), (50, 0), "{file}");

        let mut bad = suite.clone();
        let out_field = bad.outputs().next().unwrap().name.clone();
        bad.cases[5].values.get_mut(&out_field).unwrap()[0] ^= 1;
        let o = run_kats(bin, &bad, T).unwrap();
        assert_eq!((o.passed, o.failed), (49, 1), "{file}");
        assert_eq!(o.first_mismatch.unwrap().case, 5);
    }
}

#[test]
fn seeded_generation_is_deterministic() {
    let tc = ToolchainConfig::default();
    let u = parse_unit(&c_fixture("ntt8.c")).unwrap();
    let schema = infer_schema(&u, "ntt8").unwrap();
    let d = tempfile::tempdir().unwrap();
    let a = gen_kats(&u, "ntt8", &schema, 10, 42, &[], &tc, &d.path().join("a")).unwrap();
    let b = gen_kats(&u, "ntt8", &schema, 10, 42, &[], &tc, &d.path().join("b")).unwrap();
    assert_eq!(a.to_rsp(), b.to_rsp());
    assert!(a.to_rsp().starts_with("# seed = 42\n"));
    let empty = gen_kats(&u, "ntt8", &schema, 0, 42, &[], &tc, &d.path().join("c")).unwrap();
    assert!(empty.is_empty());
    let bin = build_with_harness(&u, "ntt8", &schema, &[], &tc, &d.path().join("d")).unwrap();
    let o = run_kats(bin.binary().unwrap(), &empty, T).unwrap();
    assert_eq!((o.passed, o.failed, o.first_mismatch), (0, 0, None));
}

#[test]
fn checked_in_toy_fft_suite_passes() {
    let path = common::fixtures().join("kats/toy_fft.rsp");
    if std::env::var_os("PQC2HLS_BLESS").is_some() {
        let u = parse_unit(&c_fixture("toy_fft.c")).unwrap();
        let schema = infer_schema(&u, "fft16").unwrap();
        let d = tempfile::tempdir().unwrap();
        let s = gen_kats(&u, "fft16", &schema, 1000, 7, &[], &ToolchainConfig::default(), d.path()).unwrap();
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        s.save(&path).unwrap();
    }
    let suite = KatSuite::load(&common::fixtures().join("kats/toy_fft.rsp")).unwrap();
    assert_eq!(suite.len(), 1000);
    let u = parse_unit(&c_fixture("toy_fft.c")).unwrap();
    let d = tempfile::tempdir().unwrap();
    let bin = build_with_harness(&u, "fft16", &suite.field_schema, &[], &ToolchainConfig::default(), d.path()).unwrap();
    let o = run_kats(bin.binary().unwrap(), &suite, T).unwrap();
    assert_eq!((o.passed, o.failed), (1000, 0));
}

#[test]
fn build_outcomes() {
    let tc = ToolchainConfig::default();
    let d = tempfile::tempdir().unwrap();
    let ok = build(&[SourceFile::new("m.c", "int main(void){return 0;}\n")], &tc, &d.path().join("ok")).unwrap();
    assert!(matches!(ok, BuildResult::Success { .. }));
    let bad = build(&[SourceFile::new("m.c", "int main(void){return tw;}\n")], &tc, &d.path().join("bad")).unwrap();
    match bad {
        BuildResult::CompileFailed { stderr } => assert!(stderr.contains("tw"), "{stderr}"),
        other => panic!("{other:?}"),
    }
    let missing = ToolchainConfig { compiler_command: vec!["no-such-cc".into(), "-o".into(), "{output}".into(), "{sources}".into()], ..tc.clone() };
    assert!(matches!(
        build(&[SourceFile::new("m.c", "")], &missing, &d.path().join("nf")),
        Err(VerifyError::CompilerNotFound(_))
    ));
    // a "compiler" that never finishes stands in for a compile bomb
    let slow = ToolchainConfig {
        compiler_command: vec!["sh".into(), "-c".into(), "sleep 5".into(), "{output}".into(), "{sources}".into()],
        extra_flags: vec![],
        timeout_seconds: 1,
    };
    assert_eq!(build(&[SourceFile::new("m.c", "")], &slow, &d.path().join("slow")), Err(VerifyError::Timeout(1)));
}
