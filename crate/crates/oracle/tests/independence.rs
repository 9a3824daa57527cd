//! The oracle must not share code with the engine it checks.

use std::fs;
use std::path::Path;

fn dir() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn manifest_has_no_engine_dependency() {
    let manifest = fs::read_to_string(dir().join("Cargo.toml")).unwrap();
    let deps = manifest
        .lines()
        .map(str::trim)
        .filter(|l| l.starts_with("ratspn-core") || l.starts_with("ratspn_core"));
    assert_eq!(deps.count(), 0, "oracle manifest depends on the engine");
}

#[test]
fn sources_never_name_the_engine() {
    for entry in fs::read_dir(dir().join("src")).unwrap() {
        let text = fs::read_to_string(entry.unwrap().path()).unwrap();
        assert!(!text.contains("ratspn_core"));
    }
}
