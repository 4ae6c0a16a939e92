//! Stochastic gradient ascent on the policy parameters.
//!
//! Iteration `i` samples `K` trajectories with streams `(seed, i, k,
//! Trajectory)`, subsamples experience with `(seed, i, 0, Experience)`, and
//! initializes parameters from `(seed, 0, 0, Init)`. Nothing depends on the
//! number of worker threads.

pub mod config;
mod metrics;
mod sweep;

pub use config::{
    Baseline, CheckpointFormat, EstimatorConfig, EstimatorKind, ExperimentConfig, OutputConfig, PolicyConfig,
    TrainConfig, Variant, WallTime, OUTPUT_ROOT_ENV,
};
pub use metrics::{moving_average, MetricsRow, MetricsWriter, RunMetrics, METRICS_HEADER, SMOOTHING_WINDOW};
pub use sweep::{cell_dir_name, lr_sweep, SweepCell, SweepTable, SWEEP_HEADER};

use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::env::{sample_batch, EnvSpec, Environment, Trajectory};
use crate::error::{Error, Result};
use crate::estimators::{
    state_space_dpg, state_space_pg, trajectory_dpg, trajectory_pg, BaselineKind, DpgVariant, ExperienceBuffer,
    GradientEstimate, PgVariant,
};
use crate::policy::checkpoint::{Checkpoint, PolicyKind};
use crate::policy::{GaussianPolicy, MlpParams, Parameterized};
use crate::rng::{stream, Domain};

/// `theta <- theta + lr * grad` (ascent: rewards are maximized).
pub fn sgd_step<P: Parameterized + ?Sized>(policy: &mut P, grad: &[f64], lr: f64) -> Result<()> {
    let mut theta = policy.flat_params();
    crate::error::check_dim(theta.len(), grad.len())?;
    for (t, g) in theta.iter_mut().zip(grad) {
        *t += lr * g;
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::Divergence(format!("parameter update with lr {lr} is not finite")));
    }
    policy.set_flat_params(&theta)
}

/// Rate at which an update tracks the true gradient: `lr / z_hat` for the
/// estimators that omit the `E[N + 1]` factor, `lr` otherwise.
pub fn effective_lr(lr: f64, z_hat: f64, biased: bool) -> f64 {
    if biased {
        lr / z_hat
    } else {
        lr
    }
}

/// A policy being trained.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedPolicy {
    Gaussian(GaussianPolicy),
    Deterministic(MlpParams),
}

impl TrainedPolicy {
    pub fn init(cfg: &ExperimentConfig) -> Result<Self> {
        let dims = cfg.layer_dims();
        let mut rng = stream(cfg.train.seed, 0, 0, Domain::Init);
        Ok(match cfg.policy.kind {
            PolicyKind::Gaussian => Self::Gaussian(GaussianPolicy::init(&dims, &mut rng)?),
            PolicyKind::Deterministic => Self::Deterministic(MlpParams::init(&dims, &mut rng)?),
        })
    }

    /// All parameters zero: the deterministic policy is `mu = 0`.
    pub fn zeros(cfg: &ExperimentConfig) -> Result<Self> {
        let dims = cfg.layer_dims();
        Ok(match cfg.policy.kind {
            PolicyKind::Gaussian => Self::Gaussian(GaussianPolicy::zeros(&dims)?),
            PolicyKind::Deterministic => Self::Deterministic(MlpParams::zeros(&dims)?),
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        Ok(match ck.kind {
            PolicyKind::Gaussian => Self::Gaussian(ck.to_gaussian()?),
            PolicyKind::Deterministic => Self::Deterministic(ck.to_mlp()?),
        })
    }

    /// `k` rollouts with the streams of iteration `iteration`.
    pub fn sample_batch(&self, env: &dyn Environment, k: usize, seed: u64, iteration: u64) -> Result<Vec<Trajectory>> {
        match self {
            Self::Gaussian(p) => sample_batch(env, p, k, seed, iteration),
            Self::Deterministic(p) => sample_batch(env, p, k, seed, iteration),
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        match self {
            Self::Gaussian(p) => Checkpoint::from_gaussian(p),
            Self::Deterministic(p) => Checkpoint::from_mlp(p),
        }
    }

    fn params_mut(&mut self) -> &mut dyn Parameterized {
        match self {
            Self::Gaussian(p) => p,
            Self::Deterministic(p) => p,
        }
    }
}

/// Samples a batch with `policy` and evaluates the configured estimator.
pub fn estimate_gradient(
    cfg: &ExperimentConfig,
    env: &dyn Environment,
    policy: &TrainedPolicy,
    iteration: u64,
) -> Result<GradientEstimate> {
    let est = &cfg.estimator;
    let t = &cfg.train;
    let mut rng = stream(t.seed, iteration, 0, Domain::Experience);
    let biased = est.kind.is_biased();
    match (policy, est.kind) {
        (TrainedPolicy::Gaussian(p), EstimatorKind::TrajectoryPg) => {
            let batch = sample_batch(env, p, t.k, t.seed, iteration)?;
            let variant = match est.variant {
                Variant::FullReturn => PgVariant::FullReturn,
                _ => PgVariant::RewardToGo,
            };
            let baseline = match est.baseline {
                Baseline::None => BaselineKind::None,
                Baseline::BatchMeanReturn => BaselineKind::BatchMeanReturn,
            };
            trajectory_pg(&batch, p, variant, &baseline)
        }
        (TrainedPolicy::Gaussian(p), EstimatorKind::StateSpacePg | EstimatorKind::StateSpacePgBiased) => {
            let batch = sample_batch(env, p, t.k, t.seed, iteration)?;
            let buffer = ExperienceBuffer::stochastic(&batch)?;
            let z_hat = buffer.stats().z_hat();
            state_space_pg(&buffer, p, z_hat, est.m_fraction, biased, &mut rng)
        }
        (TrainedPolicy::Deterministic(p), kind) if kind.is_deterministic() => {
            let EnvSpec::DoubleWell(dw) = &cfg.env else {
                return Err(Error::Config("deterministic policy gradients need a double-well environment".into()));
            };
            let batch = sample_batch(env, p, t.k, t.seed, iteration)?;
            if kind == EstimatorKind::TrajectoryDpg {
                let variant = match est.variant {
                    Variant::FullReturn => DpgVariant::FullReturn,
                    _ => DpgVariant::RewardToGoNext,
                };
                trajectory_dpg(&batch, p, dw, variant)
            } else {
                let buffer = ExperienceBuffer::deterministic(&batch, dw)?;
                let z_hat = buffer.stats().z_hat();
                state_space_dpg(&buffer, p, dw, z_hat, est.m_fraction, biased, &mut rng)
            }
        }
        _ => Err(Error::Config(format!("estimator {} does not match the policy kind", est.kind.name()))),
    }
}

/// A finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub metrics: RunMetrics,
    pub policy: TrainedPolicy,
}

/// A run that stopped early, with every completed iteration's metrics.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub metrics: RunMetrics,
}

impl fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "training stopped after {} iterations: {}", self.metrics.len(), self.error)
    }
}

impl std::error::Error for TrainFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Error> for TrainFailure {
    fn from(error: Error) -> Self {
        Self { error, metrics: RunMetrics::default() }
    }
}

/// Runs `cfg.train.iterations` iterations in memory.
pub fn train(cfg: &ExperimentConfig) -> std::result::Result<RunOutcome, TrainFailure> {
    run(cfg, None)
}

/// Like [`train`], writing into `dir`:
///
/// - `config.toml`: the fully resolved config (rerunning it reproduces the run)
/// - `manifest.json`: crate version, seed, layer dims and the resolved config
/// - `metrics.csv`: one row per iteration, flushed as it completes
/// - `checkpoints/iter_NNNNNN.{json,bin}` every `train.checkpoint_every` iterations
/// - `policy.{json,bin}`: the final parameters
pub fn train_to_dir(cfg: &ExperimentConfig, dir: &Path) -> std::result::Result<RunOutcome, TrainFailure> {
    run(cfg, Some(dir))
}

#[derive(Serialize)]
struct Manifest<'a> {
    package: &'static str,
    version: &'static str,
    seed: u64,
    layer_dims: Vec<usize>,
    param_count: usize,
    config: &'a ExperimentConfig,
}

struct RunFiles {
    dir: PathBuf,
    metrics: MetricsWriter<BufWriter<File>>,
    format: CheckpointFormat,
}

impl RunFiles {
    fn create(cfg: &ExperimentConfig, dir: &Path, policy: &TrainedPolicy) -> Result<Self> {
        fs::create_dir_all(dir.join("checkpoints"))?;
        let mut resolved = cfg.clone();
        resolved.output.dir = dir.to_path_buf();
        fs::write(dir.join("config.toml"), resolved.to_toml())?;
        let manifest = Manifest {
            package: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.train.seed,
            layer_dims: cfg.layer_dims(),
            param_count: policy.checkpoint().params.len(),
            config: &resolved,
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        fs::write(dir.join("manifest.json"), json + "\n")?;
        let metrics = MetricsWriter::new(BufWriter::new(File::create(dir.join("metrics.csv"))?))?;
        Ok(Self { dir: dir.to_path_buf(), metrics, format: cfg.output.checkpoint_format })
    }

    fn save(&self, policy: &TrainedPolicy, path: PathBuf) -> Result<()> {
        let ck = policy.checkpoint();
        match self.format {
            CheckpointFormat::Json => fs::write(path.with_extension("json"), ck.to_json())?,
            CheckpointFormat::Binary => fs::write(path.with_extension("bin"), ck.to_bytes())?,
        }
        Ok(())
    }
}

fn run(cfg: &ExperimentConfig, dir: Option<&Path>) -> std::result::Result<RunOutcome, TrainFailure> {
    cfg.validate()?;
    match cfg.train.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
            pool.install(|| run_loop(cfg, dir))
        }
        None => run_loop(cfg, dir),
    }
}

fn run_loop(cfg: &ExperimentConfig, dir: Option<&Path>) -> std::result::Result<RunOutcome, TrainFailure> {
    let env = cfg.env.build()?;
    let mut policy = TrainedPolicy::init(cfg)?;
    let mut files = dir.map(|d| RunFiles::create(cfg, d, &policy)).transpose()?;
    let mut metrics = RunMetrics::default();
    let start = Instant::now();
    let t = &cfg.train;
    let biased = cfg.estimator.kind.is_biased();

    for iter in 0..t.iterations {
        let step = (|| {
            let est = estimate_gradient(cfg, env.as_ref(), &policy, iter as u64)?;
            sgd_step(policy.params_mut(), &est.grad, t.lr)?;
            Ok::<_, Error>(est)
        })();
        let est = match step {
            Ok(est) => est,
            Err(error) => return Err(TrainFailure { error, metrics }),
        };
        let row = MetricsRow {
            iter,
            mean_return: est.mean_return,
            mean_hitting_time: est.mean_hitting_time,
            z_hat: est.z_hat,
            effective_lr: effective_lr(t.lr, est.z_hat, biased),
            grad_norm: est.grad_norm(),
            censor_rate: est.censor_rate,
            wall_time_s: match cfg.output.wall_time {
                WallTime::Measured => start.elapsed().as_secs_f64(),
                WallTime::Zero => 0.0,
            },
        };
        metrics.rows.push(row);
        if let Some(f) = files.as_mut() {
            let written = f.metrics.write(&row).and_then(|()| {
                let done = iter + 1;
                if done % t.checkpoint_every == 0 {
                    f.save(&policy, f.dir.join("checkpoints").join(format!("iter_{done:06}")))
                } else {
                    Ok(())
                }
            });
            if let Err(error) = written {
                return Err(TrainFailure { error, metrics });
            }
        }
    }
    if let Some(f) = files.as_ref() {
        if let Err(error) = f.save(&policy, f.dir.join("policy")) {
            return Err(TrainFailure { error, metrics });
        }
    }
    Ok(RunOutcome { metrics, policy })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_step_examples() {
        let mut p = MlpParams::zeros(&[1, 1]).unwrap();
        sgd_step(&mut p, &[1.0, 1.0], 0.1).unwrap();
        assert_eq!(p.flatten(), vec![0.1, 0.1]);
        sgd_step(&mut p, &[5.0, 5.0], 0.0).unwrap();
        assert_eq!(p.flatten(), vec![0.1, 0.1]);
        assert!(matches!(sgd_step(&mut p, &[f64::INFINITY, 0.0], 1.0), Err(Error::Divergence(_))));
        assert!(sgd_step(&mut p, &[1.0], 1.0).is_err());
    }

    #[test]
    fn two_half_steps_equal_one_full_step() {
        let mut a = MlpParams::zeros(&[2, 1]).unwrap();
        let mut b = a.clone();
        let g = [0.25, -0.5, 1.0];
        sgd_step(&mut a, &g, 0.5).unwrap();
        sgd_step(&mut a, &g, 0.5).unwrap();
        sgd_step(&mut b, &g, 1.0).unwrap();
        assert_eq!(a.flatten(), b.flatten());
    }

    #[test]
    fn effective_lr_examples() {
        assert!((effective_lr(0.05, 100.0, true) - 5e-4).abs() < 1e-18);
        assert_eq!(effective_lr(0.05, 100.0, false), 0.05);
    }

    #[test]
    fn ascent_finds_maximizer_of_concave_quadratic() {
        // J(theta) = -|theta - c|^2, exact gradient -2 (theta - c).
        let c = [0.3, -1.2];
        let mut p = MlpParams::zeros(&[1, 1]).unwrap();
        for _ in 0..200 {
            let th = p.flatten();
            let g: Vec<f64> = th.iter().zip(&c).map(|(t, c)| -2.0 * (t - c)).collect();
            sgd_step(&mut p, &g, 0.1).unwrap();
        }
        for (t, c) in p.flatten().iter().zip(&c) {
            assert!((t - c).abs() < 1e-12);
        }
    }
}
