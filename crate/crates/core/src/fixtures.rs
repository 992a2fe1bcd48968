//! The puzzle files shipped with the crate.

use std::path::{Path, PathBuf};

pub fn fixture_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn listing(dir: &str) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(fixture_root().join(dir))
        .map(|rd| {
            rd.filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == "toml"))
                .collect()
        })
        .unwrap_or_default();
    files.sort();
    files
}

/// Puzzles whose every applicable check should pass.
pub fn corpus() -> Vec<PathBuf> {
    listing("corpus")
}

/// Well-formed puzzles with at least one failing check.
pub fn negative() -> Vec<PathBuf> {
    listing("negative")
}

/// Files that must be rejected at load time.
pub fn malformed() -> Vec<PathBuf> {
    listing("malformed")
}

/// Path of a fixture by relative name, e.g. `corpus/flat.toml`.
pub fn path(name: &str) -> PathBuf {
    fixture_root().join(name)
}
