//! The checked-in fuzz corpus seeds are valid inputs for their parsers.

use std::fs;
use std::path::{Path, PathBuf};

use randhorizon::plot::OccupancyTable;
use randhorizon::policy::checkpoint::Checkpoint;
use randhorizon::trainer::{ExperimentConfig, RunMetrics};

fn seeds(target: &str) -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<PathBuf> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds in {}", dir.display());
    files
}

fn text(p: &Path) -> String {
    fs::read_to_string(p).unwrap()
}

#[test]
fn config_seeds_parse() {
    for p in seeds("config_parse") {
        ExperimentConfig::from_toml(&text(&p)).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        ExperimentConfig::from_path(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn metrics_seeds_parse_or_are_empty() {
    for p in seeds("metrics_csv") {
        match RunMetrics::from_csv(&text(&p)) {
            Ok(m) => assert!(!m.is_empty()),
            Err(e) => assert!(p.to_string_lossy().contains("header_only"), "{}: {e}", p.display()),
        }
    }
}

#[test]
fn occupancy_seeds_parse() {
    for p in seeds("occupancy_csv") {
        OccupancyTable::from_csv(&text(&p)).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn checkpoint_seeds_parse_and_agree() {
    let json: Vec<Checkpoint> =
        seeds("checkpoint_json").iter().map(|p| Checkpoint::from_json(&text(p)).unwrap()).collect();
    let bin: Vec<Checkpoint> =
        seeds("checkpoint_binary").iter().map(|p| Checkpoint::from_bytes(&fs::read(p).unwrap()).unwrap()).collect();
    assert_eq!(json, bin);
}
