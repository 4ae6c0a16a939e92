//! Learning-rate sweeps.

use std::path::Path;

use super::{train, train_to_dir, ExperimentConfig, RunMetrics};
use crate::error::{Error, Result};

/// Column names of the sweep summary CSV.
pub const SWEEP_HEADER: [&str; 8] =
    ["lr", "repeat", "seed", "status", "iterations", "final_neg_return", "final_hitting_time", "error"];

/// One `(lr, repeat)` run.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub lr: f64,
    pub repeat: usize,
    pub seed: u64,
    /// Iterations completed (fewer than requested if the run failed).
    pub iterations: usize,
    /// Negative smoothed mean return at the last completed iteration.
    pub final_neg_return: Option<f64>,
    /// Smoothed mean hitting time at the last completed iteration.
    pub final_hitting_time: Option<f64>,
    pub error: Option<String>,
    pub metrics: RunMetrics,
}

impl SweepCell {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
}

impl SweepTable {
    pub fn any_failed(&self) -> bool {
        self.cells.iter().any(|c| !c.succeeded())
    }

    /// Mean final negative return over the successful repeats of `lr`.
    pub fn mean_final_neg_return(&self, lr: f64) -> Option<f64> {
        let vals: Vec<f64> =
            self.cells.iter().filter(|c| c.lr == lr && c.succeeded()).filter_map(|c| c.final_neg_return).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// The learning rate with the lowest mean final negative return.
    pub fn best_lr(&self) -> Option<f64> {
        let mut lrs: Vec<f64> = self.cells.iter().map(|c| c.lr).collect();
        lrs.dedup();
        lrs.into_iter()
            .filter_map(|lr| self.mean_final_neg_return(lr).map(|v| (lr, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(lr, _)| lr)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SWEEP_HEADER).expect("writing to memory");
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        for c in &self.cells {
            w.write_record([
                c.lr.to_string(),
                c.repeat.to_string(),
                c.seed.to_string(),
                if c.succeeded() { "ok".into() } else { "failed".into() },
                c.iterations.to_string(),
                opt(c.final_neg_return),
                opt(c.final_hitting_time),
                c.error.clone().unwrap_or_default(),
            ])
            .expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("writing to memory")).expect("CSV is UTF-8")
    }
}

/// Subdirectory name of a sweep cell.
pub fn cell_dir_name(lr: f64, repeat: usize) -> String {
    format!("lr_{lr:e}_rep_{repeat}")
}

/// Trains once per `(lr, repeat)`. Repeat `r` uses seed `train.seed + r`, so
/// a single repeat of a single rate is exactly [`train`]. A failed cell is
/// recorded and the sweep continues. With `out_root`, each cell writes into
/// its own subdirectory (see [`cell_dir_name`]).
pub fn lr_sweep(cfg: &ExperimentConfig, lrs: &[f64], repeats: usize, out_root: Option<&Path>) -> Result<SweepTable> {
    if lrs.is_empty() {
        return Err(Error::Config("a sweep needs at least one learning rate".into()));
    }
    if repeats == 0 {
        return Err(Error::Config("a sweep needs at least one repeat".into()));
    }
    let mut table = SweepTable::default();
    for &lr in lrs {
        for repeat in 0..repeats {
            let mut run_cfg = cfg.clone();
            run_cfg.train.lr = lr;
            run_cfg.train.seed = cfg.train.seed.wrapping_add(repeat as u64);
            let result = match out_root {
                Some(root) => {
                    let dir = root.join(cell_dir_name(lr, repeat));
                    run_cfg.output.dir = dir.clone();
                    train_to_dir(&run_cfg, &dir)
                }
                None => train(&run_cfg),
            };
            let (metrics, error) = match result {
                Ok(out) => (out.metrics, None),
                Err(f) => (f.metrics, Some(f.error.to_string())),
            };
            let smoothed_hit = super::moving_average(&metrics.column(|r| r.mean_hitting_time), super::SMOOTHING_WINDOW);
            table.cells.push(SweepCell {
                lr,
                repeat,
                seed: run_cfg.train.seed,
                iterations: metrics.len(),
                final_neg_return: metrics.final_smoothed_negative_return(),
                final_hitting_time: smoothed_hit.last().copied(),
                error,
                metrics,
            });
        }
    }
    Ok(table)
}
