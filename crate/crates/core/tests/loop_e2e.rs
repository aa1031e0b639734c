mod common;

use std::path::Path;
use std::sync::Arc;

use common::c_fixture;
use pqc2hls::blockers::{scan, Category};
use pqc2hls::csrc::parse_unit;
use pqc2hls::llm::{MockProvider, MockScript};
use pqc2hls::orchestrator::{
    campaign, convert, dse, extract_kernel, preprocess, Attempt, Kernel, Outcome, Pipeline, StageKind, StepStatus,
};
use pqc2hls::synth::{MockBackend, Objective};
use pqc2hls::verify::{SourceFile, ToolchainConfig};
use pqc2hls::xform::PragmaDialect;

fn kernel(file: &str, top: &str, n: usize, dir: &Path) -> Kernel {
    let files = [SourceFile::new(file, c_fixture(file))];
    extract_kernel(&files, top, n, 7, &ToolchainConfig::default(), dir, None).unwrap()
}

fn pipeline() -> Pipeline {
    Pipeline::new(ToolchainConfig::default())
}

fn with_script(p: Pipeline, script: MockScript) -> Pipeline {
    p.with_provider(Arc::new(MockProvider::new(script)))
}

fn preprocessed_fft(dir: &Path) -> Kernel {
    let k = kernel("toy_fft.c", "fft16", 200, &dir.join("extract"));
    let p = pipeline();
    let mut a = Attempt::new("pre", &dir.join("pre"), None).unwrap();
    preprocess(&p, &k, &mut a).unwrap().0
}

#[test]
fn preprocess_clears_init_and_math_blockers() {
    let dir = tempfile::tempdir().unwrap();
    let k = kernel("toy_fft.c", "fft16", 1000, &dir.path().join("extract"));
    let p = pipeline();
    let mut a = Attempt::new("pre", &dir.path().join("a"), None).unwrap();
    let (out, report) = preprocess(&p, &k, &mut a).unwrap();
    let r = scan(&out.unit);
    assert_eq!(r.count(Category::RuntimeInit), 0);
    assert_eq!(r.count(Category::MathLibCall), 0);
    assert!(report.steps.iter().any(|s| s.step == "remove_runtime_init(init_tw)" && s.status == StepStatus::Applied));
    let o = out.self_test(&p.toolchain, &dir.path().join("check")).unwrap();
    assert_eq!(o.passed, 1000);
    assert!(a.transcript.llm_exchanges.is_empty());
    a.transcript.check().unwrap();
}

#[test]
fn preprocess_is_identity_on_clean_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let k = kernel("ntt8.c", "ntt8", 50, &dir.path().join("extract"));
    let p = with_script(pipeline(), MockScript::always("should never be asked"));
    let mut a = Attempt::new("pre", &dir.path().join("a"), p.session("pre")).unwrap();
    let (out, report) = preprocess(&p, &k, &mut a).unwrap();
    assert_eq!(out, k);
    assert_eq!(report.applied(), 0);
    assert!(a.transcript.llm_exchanges.is_empty());
}

#[test]
fn runtime_sized_malloc_goes_through_the_llm() {
    let dir = tempfile::tempdir().unwrap();
    let k = kernel("malloc_runtime.c", "sum_squares", 100, &dir.path().join("extract"));
    let rewrite = "Here is the static version:\n```c\n#include <stdlib.h>\n\nint sum_squares(const int v[8], int n)\n{\n    int m = (n & 7) + 1;\n    int sq[8];\n    int total = 0;\n    for (int i = 0; i < 8; i++) {\n        sq[i % m] = v[i] * v[i];\n        total += sq[i % m];\n    }\n    return total;\n}\n```\n";
    let p = with_script(pipeline(), MockScript::always(rewrite));
    let mut a = Attempt::new("attempt-001", &dir.path().join("a"), p.session("attempt-001")).unwrap();
    let (out, report) = preprocess(&p, &k, &mut a).unwrap();
    assert_eq!(scan(&out.unit).count(Category::DynamicMemory), 0);
    let step = report.steps.iter().find(|s| s.step == "map_static_memory").unwrap();
    assert_eq!(step.status, StepStatus::Applied);
    assert_eq!(step.provenance, ["llm:attempt-001-0001"]);
    assert_eq!(a.transcript.llm_exchanges, ["attempt-001-0001"]);
    assert!(dir.path().join("a/llm/0001.json").is_file());
}

#[test]
fn runtime_sized_malloc_without_llm_is_exhausted() {
    let dir = tempfile::tempdir().unwrap();
    let k = kernel("malloc_runtime.c", "sum_squares", 20, &dir.path().join("extract"));
    let p = pipeline();
    let mut a = Attempt::new("a", &dir.path().join("a"), None).unwrap();
    let e = preprocess(&p, &k, &mut a).unwrap_err();
    assert!(e.to_string().contains("map_static_memory"), "{e}");
}

#[test]
fn convert_passes_after_preprocessing() {
    let dir = tempfile::tempdir().unwrap();
    let k = preprocessed_fft(dir.path());
    let p = pipeline();
    let mut a = Attempt::new("attempt-001", &dir.path().join("conv"), None).unwrap();
    let c = convert(&p, &k, Objective::Area, &mut a).unwrap();
    assert!(c.outcome.is_pass(), "{:?}", c.outcome);
    let t = a.finish(true).unwrap();
    assert!(t.iterations <= 3);
    assert!(t.compile_runs >= t.hls_runs);
    t.check().unwrap();
    let last = t.stages.last().unwrap();
    assert_eq!(last.kind, StageKind::HlsSynth);
    assert!(dir.path().join("conv/transcript.json").is_file());
}

#[test]
fn always_broken_llm_exhausts_the_budget() {
    let dir = tempfile::tempdir().unwrap();
    let k = kernel("toy_fft.c", "fft16", 50, &dir.path().join("extract"));
    let p = with_script(pipeline(), MockScript::always("```c\nvoid fft16(double re[16], double im[16]) { oops }\n```"));
    let mut a = Attempt::new("attempt-001", &dir.path().join("conv"), p.session("attempt-001")).unwrap();
    let c = convert(&p, &k, Objective::Area, &mut a).unwrap();
    assert_eq!(c.outcome, Outcome::Fail("budget exhausted".to_string()));
    let t = a.finish(true).unwrap();
    assert_eq!(t.compile_runs, p.cfg.max_iterations);
    assert_eq!(t.iterations, p.cfg.max_iterations);
    assert!(t.llm_exchanges.len() as u32 <= p.llm.budget);
    t.check().unwrap();
}

#[test]
fn sampler_flattens_to_primitive_interface() {
    let dir = tempfile::tempdir().unwrap();
    let k = kernel("sampler.c", "sampler", 50, &dir.path().join("extract"));
    let p = pipeline();
    let mut a = Attempt::new("attempt-001", &dir.path().join("conv"), None).unwrap();
    let c = convert(&p, &k, Objective::Area, &mut a).unwrap();
    assert!(c.outcome.is_pass(), "{:?}", c.outcome);
    let out = c.kernel.unwrap();
    let hls = out.unit.function("sampler_hls").unwrap();
    assert!(hls.params.iter().all(|q| !q.is_aggregate && !q.is_opaque_pointer()), "{:?}", hls.params);
    assert!(out.unit.function("sampler").is_some());
}

#[test]
fn dse_latency_best_trades_area_for_cycles() {
    let dir = tempfile::tempdir().unwrap();
    let k = preprocessed_fft(dir.path());
    let p = pipeline();
    let mut a = Attempt::new("d", &dir.path().join("d"), None).unwrap();
    let area = dse(&p, &k, Objective::Area, 16, &mut a).unwrap();
    let lat = dse(&p, &k, Objective::Latency, 16, &mut a).unwrap();
    let ma = area.best_candidate().result.metrics().unwrap().clone();
    let ml = lat.best_candidate().result.metrics().unwrap().clone();
    assert!(ml.cycle_count <= ma.cycle_count && ml.area_um2 >= ma.area_um2);
    assert!(ml.cycle_count < ma.cycle_count || ml.area_um2 > ma.area_um2);
    a.finish(true).unwrap().check().unwrap();
}

#[test]
fn dse_argmin_is_scale_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let k = preprocessed_fft(dir.path());
    for objective in [Objective::Area, Objective::Latency] {
        let mut best = Vec::new();
        for scale in [1, 3, 10] {
            let p = pipeline().with_backend(Arc::new(MockBackend::new(PragmaDialect::default()).with_scale(scale)));
            let mut a = Attempt::new("d", &dir.path().join(format!("d{scale}")), None).unwrap();
            best.push(dse(&p, &k, objective, 16, &mut a).unwrap().best);
        }
        assert!(best.windows(2).all(|w| w[0] == w[1]), "{objective}: {best:?}");
    }
}

#[test]
fn dse_budget_one_is_baseline_only() {
    let dir = tempfile::tempdir().unwrap();
    let k = preprocessed_fft(dir.path());
    let mut a = Attempt::new("d", &dir.path().join("d"), None).unwrap();
    let r = dse(&pipeline(), &k, Objective::Area, 1, &mut a).unwrap();
    assert_eq!(r.candidates.len(), 1);
    assert!(r.candidates[0].plan.is_empty());
}

#[test]
fn dse_on_loop_free_kernel_picks_empty_plan() {
    let dir = tempfile::tempdir().unwrap();
    let src = "int add3(int a, int b, int c)\n{\n    return a + b + c;\n}\n";
    let k = extract_kernel(&[SourceFile::new("add3.c", src)], "add3", 20, 7, &ToolchainConfig::default(), dir.path(), None)
        .unwrap();
    let mut a = Attempt::new("d", &dir.path().join("d"), None).unwrap();
    let r = dse(&pipeline(), &k, Objective::Area, 16, &mut a).unwrap();
    assert!(r.best_candidate().plan.is_empty());
    assert_eq!(parse_unit(src).unwrap().functions.len(), 1);
}

#[test]
fn campaigns_replay_identically() {
    let dir = tempfile::tempdir().unwrap();
    let k = preprocessed_fft(dir.path());
    let mut p = pipeline();
    p.cfg.dse.enabled = true;
    p.cfg.dse.budget = 4;
    let one = campaign(&p, &k, 3, 2, Objective::Area, &dir.path().join("c1")).unwrap();
    let two = campaign(&p, &k, 3, 1, Objective::Area, &dir.path().join("c2")).unwrap();
    assert_eq!(one, two);
    assert_eq!(one.stats.runs, 3);
    assert_eq!(one.stats.success_rate_pct, 100.0);
    for t in &one.transcripts {
        t.check().unwrap();
        assert_eq!(t.wall_seconds, 0.0);
        assert!(t.dse_best.is_some());
    }
    let ids: Vec<&str> = one.transcripts.iter().map(|t| t.attempt_id.as_str()).collect();
    assert_eq!(ids, ["attempt-001", "attempt-002", "attempt-003"]);
}

#[test]
fn cancelled_campaign_keeps_nothing_unfinished() {
    let dir = tempfile::tempdir().unwrap();
    let k = preprocessed_fft(dir.path());
    let p = pipeline();
    p.cancel.store(true, std::sync::atomic::Ordering::SeqCst);
    let r = campaign(&p, &k, 3, 1, Objective::Area, &dir.path().join("c")).unwrap();
    assert!(r.transcripts.is_empty());
}
