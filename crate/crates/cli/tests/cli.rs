use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use randhorizon::plot::OccupancyTable;
use randhorizon::trainer::{METRICS_HEADER, OUTPUT_ROOT_ENV, SWEEP_HEADER};

const TINY: &str = r#"
[env]
kind = "double_well"
alphas = [1.0, 1.0]

[policy]
kind = "deterministic"
layers = [8]

[estimator]
kind = "trajectory_dpg"

[train]
k = 8
iterations = 6
lr = 2e-3
seed = 11

[output]
dir = "run"
wall_time = "zero"
"#;

fn bin(dir: &Path) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_randhorizon"));
    cmd.current_dir(dir).env_remove(OUTPUT_ROOT_ENV);
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn missing_lr_exits_2_and_names_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &TINY.replace("lr = 2e-3\n", ""));
    let out = run(bin(tmp.path()).args(["train", "--config"]).arg(&cfg));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("train.lr"), "{}", stderr(&out));
}

#[test]
fn unknown_key_exits_2_and_names_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &TINY.replace("seed = 11", "seed = 11\nbatch = 3"));
    let out = run(bin(tmp.path()).args(["train", "--config"]).arg(&cfg));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("train.batch"), "{}", stderr(&out));
}

#[test]
fn train_writes_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TINY);
    let out = run(bin(tmp.path()).args(["train", "--config"]).arg(&cfg));
    assert!(out.status.success(), "{}", stderr(&out));
    let dir = tmp.path().join("run");
    let csv = fs::read_to_string(dir.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 6);
    assert_eq!(lines[0], METRICS_HEADER.join(","));
    assert!(dir.join("manifest.json").exists());
    assert!(dir.join("config.toml").exists());
    assert!(dir.join("policy.json").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
}

#[test]
fn rerun_from_written_config_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TINY);
    assert!(run(bin(tmp.path()).args(["train", "--config"]).arg(&cfg)).status.success());
    let first = fs::read(tmp.path().join("run/metrics.csv")).unwrap();

    let again = tmp.path().join("again");
    fs::create_dir(&again).unwrap();
    let resolved = fs::read_to_string(tmp.path().join("run/config.toml")).unwrap();
    let cfg2 = write_config(&again, "c.toml", &resolved);
    let out = run(bin(&again).args(["train", "--config"]).arg(&cfg2));
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(first, fs::read(again.join("run/metrics.csv")).unwrap());
}

#[test]
fn output_root_env_relocates_relative_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("root");
    let cfg = write_config(tmp.path(), "c.toml", TINY);
    let out = run(bin(tmp.path()).env(OUTPUT_ROOT_ENV, &root).args(["train", "--config"]).arg(&cfg));
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(root.join("run/metrics.csv").exists());
    assert!(!tmp.path().join("run").exists());
}

#[test]
fn sweep_writes_one_cell_per_lr_and_repeat() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TINY);
    let out = run(bin(tmp.path()).args(["sweep", "--lrs", "1e-3,2e-3", "--repeats", "2", "--config"]).arg(&cfg));
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = fs::read_to_string(tmp.path().join("run/summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], SWEEP_HEADER.join(","));
    assert_eq!(lines.len(), 1 + 2 * 2);
    for cell in ["lr_1e-3_rep_0", "lr_1e-3_rep_1", "lr_2e-3_rep_0", "lr_2e-3_rep_1"] {
        assert!(tmp.path().join("run").join(cell).join("metrics.csv").exists(), "{cell}");
    }
}

#[test]
fn single_cell_sweep_matches_train() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TINY);
    assert!(run(bin(tmp.path()).args(["train", "--config"]).arg(&cfg)).status.success());
    let trained = fs::read(tmp.path().join("run/metrics.csv")).unwrap();
    let sweep_cfg = write_config(tmp.path(), "s.toml", &TINY.replace("dir = \"run\"", "dir = \"sweep\""));
    let out = run(bin(tmp.path()).args(["sweep", "--lrs", "2e-3", "--repeats", "1", "--config"]).arg(&sweep_cfg));
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(trained, fs::read(tmp.path().join("sweep/lr_2e-3_rep_0/metrics.csv")).unwrap());
}

#[test]
fn sweep_failure_is_recorded_and_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TINY);
    let out = run(bin(tmp.path()).args(["sweep", "--lrs", "2e-3,1e300", "--config"]).arg(&cfg));
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    let summary = fs::read_to_string(tmp.path().join("run/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.lines().nth(1).unwrap().contains(",ok,"));
    assert!(summary.lines().nth(2).unwrap().contains(",failed,"));
}

#[test]
fn verify_passes_and_negated_gradients_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = run(bin(tmp.path()).args(["verify", "--samples", "20000"]));
    let text = String::from_utf8_lossy(&ok.stdout).into_owned();
    assert!(ok.status.success(), "{text}");
    assert!(text.contains("[PASS]"));

    let bad = run(bin(tmp.path()).args(["verify", "--samples", "20000", "--negate-gradients"]));
    let text = String::from_utf8_lossy(&bad.stdout).into_owned();
    assert!(!bad.status.success(), "{text}");
    assert!(text.contains("[FAIL] policy-gradient oracle"), "{text}");
    assert!(text.contains("[FAIL] deterministic-gradient oracle"), "{text}");
}

#[test]
fn plot_rejects_empty_body_and_draws_single_point() {
    let tmp = tempfile::tempdir().unwrap();
    let header = METRICS_HEADER.join(",");
    fs::write(tmp.path().join("empty.csv"), format!("{header}\n")).unwrap();
    let out = run(bin(tmp.path()).args(["plot", "--input", "empty.csv", "--kind", "return", "--out", "e.svg"]));
    assert!(!out.status.success());

    fs::write(tmp.path().join("one.csv"), format!("{header}\n0,-3.5,350,351,0.002,1.5,0,0\n")).unwrap();
    let out = run(bin(tmp.path()).args(["plot", "--input", "one.csv", "--kind", "return", "--out", "one.svg"]));
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(fs::read_to_string(tmp.path().join("one.svg")).unwrap().contains("<circle"));
}

#[test]
fn plot_error_names_row() {
    let tmp = tempfile::tempdir().unwrap();
    let header = METRICS_HEADER.join(",");
    fs::write(
        tmp.path().join("bad.csv"),
        format!("{header}\n0,-3.5,350,351,0.002,1.5,0,0\n1,oops,350,351,0.002,1.5,0,0\n"),
    )
    .unwrap();
    let out = run(bin(tmp.path()).args(["plot", "--input", "bad.csv", "--kind", "effective_lr", "--out", "b.svg"]));
    assert!(!out.status.success());
    assert!(stderr(&out).contains("row 2"), "{}", stderr(&out));
}

#[test]
fn plot_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TINY);
    assert!(run(bin(tmp.path()).args(["train", "--config"]).arg(&cfg)).status.success());
    for out in ["a.svg", "b.svg"] {
        let o = run(bin(tmp.path()).args(["plot", "--input", "run/metrics.csv", "--kind", "return", "--out", out]));
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(tmp.path().join("a.svg")).unwrap(), fs::read(tmp.path().join("b.svg")).unwrap());
}

#[test]
fn zero_policy_occupancy_concentrates_in_the_well() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TINY);
    let out = run(bin(tmp.path())
        .args(["occupancy", "--zero-policy", "--trajectories", "200", "--bins", "20", "--out", "occ.csv", "--config"])
        .arg(&cfg));
    assert!(out.status.success(), "{}", stderr(&out));
    let table = OccupancyTable::from_csv(&fs::read_to_string(tmp.path().join("occ.csv")).unwrap()).unwrap();
    assert_eq!((table.rows, table.cols), (20, 20));
    // cells are 0.2 wide on [-2, 2]; the start well at (-1, -1) is cell (5, 5)
    let argmax = (0..400).max_by(|&a, &b| table.normalized[a].total_cmp(&table.normalized[b])).unwrap();
    let (r, c) = (argmax / 20, argmax % 20);
    assert!(r.abs_diff(5) <= 1 && c.abs_diff(5) <= 1, "densest cell ({r}, {c})");
    let left_well: f64 = (0..20).flat_map(|r| (2..9).map(move |c| r * 20 + c)).map(|i| table.normalized[i]).sum();
    assert!(left_well > 0.5, "mass with x in [-1.6, -0.2]: {left_well}");
    let svg = run(bin(tmp.path()).args(["plot", "--input", "occ.csv", "--kind", "occupancy", "--out", "occ.svg"]));
    assert!(svg.status.success(), "{}", stderr(&svg));
    assert_eq!(fs::read_to_string(tmp.path().join("occ.svg")).unwrap().matches("<rect").count(), 2 + 400);
}
