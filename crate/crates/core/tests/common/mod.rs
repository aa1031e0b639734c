#![allow(dead_code)]

use std::fs;
use std::path::PathBuf;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn c_fixture(name: &str) -> String {
    fs::read_to_string(fixtures().join("c").join(name)).unwrap()
}

pub fn golden(name: &str) -> PathBuf {
    fixtures().join("golden").join(name)
}

/// Compare against a golden file, rewriting it when PQC2HLS_BLESS is set.
pub fn check_golden(name: &str, actual: &str) {
    let p = golden(name);
    if std::env::var_os("PQC2HLS_BLESS").is_some() {
        fs::write(&p, actual).unwrap();
    }
    let want = fs::read_to_string(&p).unwrap_or_else(|_| panic!("missing golden {}", p.display()));
    assert_eq!(actual, want, "golden {name}");
}
