//! Transforms checked by compiling the result and replaying KATs.

mod common;

use std::time::Duration;

use common::{c_fixture, check_golden, fixtures};
use pqc2hls::blockers::{scan, Category};
use pqc2hls::csrc::{parse_unit, SourceUnit};
use pqc2hls::verify::{build_with_harness, gen_kats, infer_schema, run_kats, KatSuite, SourceFile, ToolchainConfig};
use pqc2hls::xform::{
    apply, flatten_aggregates, map_static_memory, pointers_to_arrays, remove_runtime_init, XformError,
};

const T: Duration = Duration::from_secs(60);

/// KATs from `before` must pass on `after`.
fn assert_equivalent(before: &SourceUnit, after: &SourceUnit, top: &str, extra: &[SourceFile]) {
    let tc = ToolchainConfig::default();
    let dir = tempfile::tempdir().unwrap();
    let schema = infer_schema(before, top).unwrap();
    let suite = gen_kats(before, top, &schema, 100, 11, &[], &tc, &dir.path().join("ref")).unwrap();
    let built = build_with_harness(after, top, &schema, extra, &tc, &dir.path().join("new")).unwrap();
    let bin = built.binary().unwrap_or_else(|| panic!("patched unit failed to compile: {built:?}\n{}", after.text()));
    let o = run_kats(bin, &suite, T).unwrap();
    assert_eq!((o.passed, o.failed), (100, 0), "{:?}", o.first_mismatch);
}

#[test]
fn toy_fft_init_removal_passes_checked_in_kats() {
    let u = parse_unit(&c_fixture("toy_fft.c")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let tc = ToolchainConfig::default();
    let r = remove_runtime_init(&u, "init_tw", "toy_fft", None, &tc, dir.path()).unwrap();
    assert_eq!(r.header_name, "toy_fft_consts.h");
    assert_eq!(r.tables.len(), 1);
    assert_eq!((r.tables[0].name.as_str(), r.tables[0].length), ("tw", 16));
    assert!(r.tables[0].values[0].starts_with("0x1p+0"));

    let patched = apply(&u, &r.patch).unwrap();
    assert!(patched.function("init_tw").is_none());
    assert!(patched.text().contains("#include \"toy_fft_consts.h\""));
    assert_eq!(scan(&patched).count(Category::RuntimeInit), 0);

    let suite = KatSuite::load(&fixtures().join("kats/toy_fft.rsp")).unwrap();
    let header = SourceFile::new(&r.header_name, r.header_text.clone());
    let bin = build_with_harness(&patched, "fft16", &suite.field_schema, &[header], &tc, &dir.path().join("kat")).unwrap();
    let o = run_kats(bin.binary().unwrap(), &suite, T).unwrap();
    assert_eq!((o.passed, o.failed), (1000, 0));
}

#[test]
fn two_tables_share_one_header() {
    let u = parse_unit(&c_fixture("two_tables.c")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let r = remove_runtime_init(&u, "init_tables", "two_tables", None, &ToolchainConfig::default(), dir.path()).unwrap();
    let names: Vec<_> = r.tables.iter().map(|t| t.name.as_str()).collect();
    assert_eq!(names, ["zetas", "inv_tab"]);
    check_golden("two_tables_consts.h", &r.header_text);
    let patched = apply(&u, &r.patch).unwrap();
    check_golden("two_tables_patched.c", patched.text());
    assert_equivalent(&u, &patched, "twist", &[SourceFile::new(&r.header_name, r.header_text)]);
}

#[test]
fn later_removal_appends_to_header() {
    let src = "#include <stdint.h>\nint16_t a[2];\nint16_t b[2];\nvoid ia(void){ a[0] = 3; a[1] = 4; }\nvoid ib(void){ b[0] = -1; b[1] = 9; }\nint use(int i){ return a[i & 1] + b[i & 1]; }\n";
    let u = parse_unit(src).unwrap();
    let tc = ToolchainConfig::default();
    let dir = tempfile::tempdir().unwrap();
    let first = remove_runtime_init(&u, "ia", "k", None, &tc, &dir.path().join("1")).unwrap();
    let u1 = apply(&u, &first.patch).unwrap();
    let second = remove_runtime_init(&u1, "ib", "k", Some(&first.header_text), &tc, &dir.path().join("2")).unwrap();
    let u2 = apply(&u1, &second.patch).unwrap();
    assert_eq!(u2.text().matches("#include \"k_consts.h\"").count(), 1);
    assert!(second.header_text.contains("const int16_t a[2] = {\n    3, 4,\n};"));
    assert!(second.header_text.contains("const int16_t b[2] = {\n    -1, 9,\n};"));
    assert!(second.header_text.trim_end().ends_with("#endif"));
    assert_equivalent(&u, &u2, "use", &[SourceFile::new("k_consts.h", second.header_text)]);
}

#[test]
fn static_memory_preserves_behaviour() {
    let u = parse_unit(&c_fixture("malloc_buf.c")).unwrap();
    let p = map_static_memory(&u).unwrap();
    let patched = apply(&u, &p).unwrap();
    check_golden("malloc_buf_static.c", patched.text());
    assert_eq!(scan(&patched).count(Category::DynamicMemory), 0);
    assert!(patched.function("release").is_none());
    assert_equivalent(&u, &patched, "mix16", &[]);
    assert!(map_static_memory(&patched).unwrap().is_empty());
}

#[test]
fn runtime_sized_malloc_is_rejected() {
    let u = parse_unit(&c_fixture("malloc_runtime.c")).unwrap();
    assert!(matches!(map_static_memory(&u), Err(XformError::NotStaticallySizable(_))));
}

#[test]
fn pair_ctx_flattening_preserves_behaviour() {
    let u = parse_unit(&c_fixture("pair_ctx.c")).unwrap();
    let patched = apply(&u, &flatten_aggregates(&u, "scale8").unwrap()).unwrap();
    let hls = patched.function("scale8_hls").unwrap();
    assert!(hls.params.iter().all(|p| !p.is_aggregate));
    assert_equivalent(&u, &patched, "scale8", &[]);
}

#[test]
fn sampler_flattening_matches_listing_shape() {
    let u = parse_unit(&c_fixture("sampler.c")).unwrap();
    let p = flatten_aggregates(&u, "sampler").unwrap();
    let patched = apply(&u, &p).unwrap();
    check_golden("sampler_flat.c", patched.text());
    let text = patched.text();
    assert!(text.contains(
        "int sampler_hls(fpr mu, fpr isigma, uint8_t p_buf[512], size_t p_ptr[1], uint8_t p_state[256], fpr sigma_min)"
    ));
    assert!(text.contains("z0 = gaussian0_sampler_no_structs(p_buf, p_ptr, p_state);"));
    assert!(text.contains("BerExp_no_structs(p_buf, p_ptr, p_state, x, ccs)"));
    assert!(text.contains("return sampler_hls(mu, isigma, spc->p.buf.d, &spc->p.ptr, spc->p.state.d, spc->sigma_min);"));
    let hls = patched.function("sampler_hls").unwrap();
    assert!(hls.params.iter().all(|p| !p.is_aggregate && !p.is_opaque_pointer()));
    assert_equivalent(&u, &patched, "sampler", &[]);
    assert!(flatten_aggregates(&patched, "sampler").unwrap().is_empty());
}

#[test]
fn pointer_param_rewrite_preserves_behaviour() {
    let u = parse_unit(&c_fixture("ptr_scale.c")).unwrap();
    let p = pointers_to_arrays(&u, "scale", &Default::default()).unwrap();
    let patched = apply(&u, &p).unwrap();
    let text = patched.text();
    assert!(text.contains("static void scale(uint32_t v[8], uint32_t k)"));
    assert!(text.contains("v[i] = v[i] * k + 1;") && text.contains("v[0] ^= k;"));
    assert_eq!(scan(&patched).count(Category::PointerInterface), 0);
    assert_equivalent(&u, &patched, "ptr_top", &[]);
}
