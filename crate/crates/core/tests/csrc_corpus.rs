use std::fs;
use std::path::PathBuf;

use pqc2hls::csrc::parse_unit;

fn fixture(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/c").join(name);
    fs::read_to_string(p).unwrap()
}

fn corpus() -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/c");
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "c"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn corpus_round_trips_byte_exact() {
    let c = corpus();
    assert!(c.len() >= 8);
    for (name, text) in c {
        let u = parse_unit(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(u.render(), text, "{name}");
    }
}

#[test]
fn corpus_spans_are_sound() {
    for (name, text) in corpus() {
        let u = parse_unit(&text).unwrap();
        let mut spans: Vec<_> = u.functions.iter().map(|f| f.span).collect();
        spans.sort();
        for w in spans.windows(2) {
            assert!(w[0].end <= w[1].start, "{name}: overlapping functions");
        }
        for f in &u.functions {
            assert!(f.span.end <= text.len());
            for l in &f.loops {
                assert!(f.body_span.start < l.span.start && l.span.end < f.body_span.end, "{name}:{}", f.name);
            }
        }
        for e in &u.call_edges {
            assert!(e.span.end <= text.len());
        }
        for g in &u.globals {
            assert!(g.span.end <= text.len());
            assert_eq!(g.element_count.is_some(), g.is_array && g.dims.iter().all(Option::is_some));
        }
    }
}

#[test]
fn toy_fft_model() {
    let u = parse_unit(&fixture("toy_fft.c")).unwrap();
    let names: Vec<_> = u.functions.iter().map(|f| f.name.as_str()).collect();
    assert_eq!(names, ["init_tw", "fft16"]);
    assert_eq!(u.globals.len(), 1);
    let tw = &u.globals[0];
    assert_eq!((tw.name.as_str(), tw.is_array, tw.element_count), ("tw", true, Some(16)));
    assert!(u.call_edges.iter().all(|e| e.caller != "fft16"));
    let inc: Vec<_> = u.includes.iter().map(|i| i.name.as_str()).collect();
    assert_eq!(inc, ["math.h"]);
    let fft = u.function("fft16").unwrap();
    let trips: Vec<_> = fft.loops.iter().map(|l| (l.trip_count, l.nesting_depth)).collect();
    assert_eq!(trips, [(Some(8), 0), (Some(16), 1)]);
    assert_eq!(u.function("init_tw").unwrap().writes_globals, ["tw"]);
}

#[test]
fn sampler_model() {
    let u = parse_unit(&fixture("sampler.c")).unwrap();
    let s = u.function("sampler").unwrap();
    let ctx = s.param("ctx").unwrap();
    assert!(ctx.is_pointer && ctx.is_aggregate);
    assert_eq!(u.context_type(s, "ctx"), Some(("spc".into(), "sampler_context".into())));
    let closure = u.call_closure("sampler").unwrap().functions;
    for name in ["gaussian0_sampler", "prng_get_u8", "BerExp", "fpr_floor", "fpr_sub", "fpr_of", "fpr_mul", "fpr_sqr", "fpr_half"] {
        assert!(closure.iter().any(|c| c == name), "{name} missing from {closure:?}");
    }
    assert!(!closure.iter().any(|c| c == "sampler_new"));
}

#[test]
fn chain_slice_omits_unrelated() {
    let u = parse_unit(&fixture("chain.c")).unwrap();
    assert_eq!(u.call_closure("f").unwrap().functions, ["f", "g", "h"]);
    let s = u.extract_slice("f", &[]).unwrap();
    let su = parse_unit(&s).unwrap();
    assert!(su.function("q").is_none());
    assert_eq!(su.function("f").unwrap().signature_span.len(), u.function("f").unwrap().signature_span.len());
}

#[test]
fn slices_reparse_to_closure_set() {
    for (name, text) in corpus() {
        let u = parse_unit(&text).unwrap();
        for f in &u.functions {
            let Ok(slice) = u.extract_slice(&f.name, &[]) else { continue };
            let su = parse_unit(&slice).unwrap_or_else(|e| panic!("{name}/{}: {e}", f.name));
            let mut got: Vec<_> = su.functions.iter().map(|x| x.name.clone()).collect();
            let mut want = u.slice_functions(&f.name).unwrap();
            got.sort();
            want.sort();
            assert_eq!(got, want, "{name}/{}", f.name);
            let orig_sig = u.slice_text(f.signature_span);
            let new_f = su.function(&f.name).unwrap();
            assert_eq!(su.slice_text(new_f.signature_span), orig_sig);
        }
    }
}

#[test]
fn parse_is_deterministic() {
    for (_, text) in corpus() {
        assert_eq!(parse_unit(&text).unwrap(), parse_unit(&text).unwrap());
    }
}
