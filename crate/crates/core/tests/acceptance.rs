//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Every criterion also has a runtime budget.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use randhorizon::env::{EnvSpec, MountainCarConfig};
use randhorizon::oracle::checks::{
    analytic_gradients, collapse_identity, dpg_oracle, lemma1, lemma2_counting, noise_reconstruction, scaling_identity,
    tabular_gradient, Check,
};
use randhorizon::oracle::SuiteOptions;
use randhorizon::policy::checkpoint::PolicyKind;
use randhorizon::trainer::PolicyConfig;
use randhorizon::trainer::{
    lr_sweep, moving_average, train_to_dir, EstimatorKind, ExperimentConfig, SweepTable, TrainedPolicy, WallTime,
    SMOOTHING_WINDOW,
};

const K: usize = 100_000;
const UNBIASED_LRS: [f64; 3] = [1e-3, 2e-3, 5e-3];
const BIASED_LRS: [f64; 3] = [0.25, 0.5, 1.0];

fn seed() -> u64 {
    SuiteOptions::default().seed
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn merge(checks: Vec<Check>) -> (bool, String) {
    let passed = checks.iter().all(|c| c.passed);
    let detail = checks
        .iter()
        .map(|c| format!("{}{}", if c.passed { "" } else { "FAILED " }, c.detail))
        .collect::<Vec<_>>()
        .join(" | ");
    (passed, detail)
}

fn one(c: Check) -> (bool, String) {
    merge(vec![c])
}

fn summarize_sweep(table: &SweepTable) -> String {
    table
        .cells
        .iter()
        .map(|c| match (&c.error, c.final_neg_return) {
            (None, Some(v)) => format!("{:e}: {v:.4}", c.lr),
            (Some(e), _) => format!("{:e}: failed ({e})", c.lr),
            _ => format!("{:e}: no data", c.lr),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn desk_training() -> Result<(bool, String), String> {
    let err = |e: &dyn std::fmt::Display| e.to_string();
    let unbiased = ExperimentConfig::from_path(&configs_dir().join("double_well_d2.toml")).map_err(|e| err(&e))?;
    let biased = ExperimentConfig::from_path(&configs_dir().join("double_well_d2_biased.toml")).map_err(|e| err(&e))?;

    let env = unbiased.env.build().map_err(|e| err(&e))?;
    let zero = TrainedPolicy::zeros(&unbiased).map_err(|e| err(&e))?;
    let batch = zero.sample_batch(env.as_ref(), 1000, seed(), 0).map_err(|e| err(&e))?;
    let baseline = batch.iter().map(|t| t.hitting_step() as f64).sum::<f64>() / batch.len() as f64;

    let u = lr_sweep(&unbiased, &UNBIASED_LRS, 1, None).map_err(|e| err(&e))?;
    let b = lr_sweep(&biased, &BIASED_LRS, 1, None).map_err(|e| err(&e))?;

    let main = u.cells.iter().find(|c| c.lr == unbiased.train.lr).ok_or("configured rate missing from sweep")?;
    let hit = moving_average(&main.metrics.column(|r| r.mean_hitting_time), SMOOTHING_WINDOW);
    let final_hit = *hit.last().ok_or("empty run")?;
    let ratio = baseline / final_hit;

    let best = |t: &SweepTable| t.best_lr().and_then(|lr| t.mean_final_neg_return(lr).map(|v| (lr, v)));
    let (ulr, uval) = best(&u).ok_or("every unbiased run failed")?;
    let (blr, bval) = best(&b).ok_or("every biased run failed")?;
    let passed = ratio >= 2.0 && uval <= bval && !u.any_failed();
    Ok((
        passed,
        format!(
            "zero-policy hitting time {baseline:.1}, smoothed at iteration {} with lr {:e}: {final_hit:.1} \
             (decrease {ratio:.2}x, need 2x); best trajectory DPG lr {ulr:e} neg return {uval:.4} vs best biased \
             lr {blr:e} {bval:.4} (need <=); sweeps [{}] [{}]",
            main.iterations,
            unbiased.train.lr,
            summarize_sweep(&u),
            summarize_sweep(&b),
        ),
    ))
}

fn tiny_configs() -> Vec<ExperimentConfig> {
    let mut dw = ExperimentConfig::from_path(&configs_dir().join("double_well_d2.toml")).expect("shipped config");
    dw.estimator.kind = EstimatorKind::StateSpaceDpg;
    dw.estimator.m_fraction = 0.5;
    dw.train.k = 16;
    dw.train.iterations = 8;
    dw.train.checkpoint_every = 4;

    let mc_env = MountainCarConfig { max_steps: 2_000, ..Default::default() };
    let mut mc = ExperimentConfig::new(
        EnvSpec::MountainCar(mc_env),
        PolicyConfig { kind: PolicyKind::Gaussian, layers: vec![8, 8] },
        EstimatorKind::StateSpacePg,
        8,
        4,
        1e-4,
        3,
    );
    mc.estimator.m_fraction = 0.5;
    vec![dw, mc]
}

fn reproducibility() -> Result<(bool, String), String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut details = Vec::new();
    let mut passed = true;
    for (i, mut cfg) in tiny_configs().into_iter().enumerate() {
        cfg.output.wall_time = WallTime::Zero;
        let mut outputs = Vec::new();
        for workers in [1, 2, 4] {
            let mut c = cfg.clone();
            c.train.workers = Some(workers);
            let dir = tmp.path().join(format!("cfg{i}_w{workers}"));
            train_to_dir(&c, &dir).map_err(|e| e.to_string())?;
            outputs.push(std::fs::read(dir.join("metrics.csv")).map_err(|e| e.to_string())?);
        }
        // rerun from the config written next to the first run
        let written = tmp.path().join(format!("cfg{i}_w1/config.toml"));
        let rerun = ExperimentConfig::from_path(&written).map_err(|e| e.to_string())?;
        let dir = tmp.path().join(format!("cfg{i}_rerun"));
        train_to_dir(&rerun, &dir).map_err(|e| e.to_string())?;
        outputs.push(std::fs::read(dir.join("metrics.csv")).map_err(|e| e.to_string())?);
        let same = outputs.iter().all(|o| o == &outputs[0]);
        passed &= same;
        details.push(format!(
            "{} ({} bytes): workers 1/2/4 and rerun {}",
            cfg.estimator.kind.name(),
            outputs[0].len(),
            if same { "byte-identical" } else { "DIFFER" }
        ));
    }
    Ok((passed, details.join("; ")))
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: Box<dyn Fn() -> (bool, String)>,
}

fn criteria() -> Vec<Criterion> {
    let s = seed();
    let flatten = |r: Result<(bool, String), String>| r.unwrap_or_else(|e| (false, format!("error: {e}")));
    vec![
        Criterion {
            id: 1,
            name: "scaling identity",
            budget: Duration::from_secs(1),
            run: Box::new(move || one(scaling_identity(s))),
        },
        Criterion {
            id: 2,
            name: "collapse identity",
            budget: Duration::from_secs(10),
            run: Box::new(move || one(collapse_identity(s, 20))),
        },
        Criterion {
            id: 3,
            name: "tabular gradient oracle",
            budget: Duration::from_secs(120),
            run: Box::new(move || one(tabular_gradient(s, K, false))),
        },
        Criterion {
            id: 4,
            name: "deterministic gradient oracle",
            budget: Duration::from_secs(180),
            run: Box::new(move || one(dpg_oracle(s, K, false))),
        },
        Criterion {
            id: 5,
            name: "geometric horizon vs discounting",
            budget: Duration::from_secs(60),
            run: Box::new(move || merge(lemma1(s, K))),
        },
        Criterion {
            id: 6,
            name: "analytic gradients",
            budget: Duration::from_secs(30),
            run: Box::new(move || one(analytic_gradients(s, 100))),
        },
        Criterion {
            id: 7,
            name: "noise reconstruction",
            budget: Duration::from_secs(5),
            run: Box::new(move || one(noise_reconstruction(s, 10_000))),
        },
        Criterion {
            id: 8,
            name: "occupancy counting",
            budget: Duration::from_secs(30),
            run: Box::new(move || one(lemma2_counting(s, K))),
        },
        Criterion {
            id: 9,
            name: "desk-scale training",
            budget: Duration::from_secs(30 * 60),
            run: Box::new(move || flatten(desk_training())),
        },
        Criterion {
            id: 10,
            name: "reproducibility",
            budget: Duration::from_secs(60),
            run: Box::new(move || flatten(reproducibility())),
        },
    ]
}

fn main() -> ExitCode {
    // libtest-style filters: run only criteria whose number or name matches
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for c in criteria() {
        let label = format!("{} {}", c.id, c.name);
        if !filters.is_empty() && !filters.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let (ok, detail) = (c.run)();
        let elapsed = start.elapsed();
        let in_budget = elapsed <= c.budget;
        let passed = ok && in_budget;
        failed += usize::from(!passed);
        println!(
            "[{}] criterion {label} ({:.1}s, budget {}s{}): {detail}",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            c.budget.as_secs(),
            if in_budget { "" } else { ", OVER BUDGET" },
        );
    }
    println!("acceptance: {ran} criteria, {failed} failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
