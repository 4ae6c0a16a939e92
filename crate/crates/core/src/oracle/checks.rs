//! The verification suite: each check compares an estimator or identity
//! against ground truth and reports its numeric margin.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use rayon::prelude::*;

use super::{
    crn_fd_gradient, exact_discounted_return, exact_expected_hitting_time, exact_expected_return,
    exact_policy_gradient, finite_difference_grad, lemma1_check, ArRewardStream, ConstantReward, MeanSe, NullPolicy,
    SoftmaxTabularPolicy, TabularMdp,
};
use crate::env::{langevin_step, sample_batch, DoubleWell, DoubleWellConfig, InitialStateDistribution, Trajectory};
use crate::error::Result;
use crate::estimators::{
    estimate_z, grad_a_log_p, mean_visits, occupancy_histogram, state_space_dpg, state_space_pg, trajectory_dpg,
    trajectory_pg, BaselineKind, DpgVariant, ExperienceBuffer, GradientEstimate, GridSpec, PgVariant,
};
use crate::policy::{GaussianPolicy, MlpParams, Parameterized, ScorePolicy};
use crate::rng::{stream, Domain};

/// One line of the report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_string(), passed, detail }
    }

    fn from_result(name: &str, result: Result<(bool, String)>) -> Self {
        match result {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Trajectories (or draws) per Monte Carlo check.
    pub samples: usize,
    /// Flip the sign of every Monte Carlo gradient before comparing; a
    /// healthy suite must then fail.
    pub negate_gradients: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { seed: 20_240_601, samples: 100_000, negate_gradients: false }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteReport {
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

/// Runs every check with the given options.
pub fn run_suite(opts: &SuiteOptions) -> SuiteReport {
    let s = opts.seed;
    let k = opts.samples;
    let neg = opts.negate_gradients;
    let mut checks = vec![
        analytic_gradients(s, 100),
        noise_reconstruction(s, 10_000),
        scaling_identity(s),
        collapse_identity(s, 20),
        tabular_values(s, k),
        tabular_gradient(s, k, neg),
        dpg_oracle(s, k, neg),
    ];
    checks.extend(lemma1(s, k));
    checks.push(lemma1_tabular(s, k));
    checks.push(lemma2_counting(s, k));
    SuiteReport { checks }
}

/// `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| rel_err(*x, *y)).fold(0.0, f64::max)
}

/// `||a - b||_inf / max(||b||_inf, floor)`.
fn norm_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(floor, f64::max);
    diff / scale
}

fn max_z(est: &[MeanSe], truth: &[f64]) -> f64 {
    est.iter().zip(truth).map(|(e, t)| e.z_score(&MeanSe { mean: *t, se: 0.0 })).fold(0.0, f64::max)
}

fn fmt_vec(v: impl IntoIterator<Item = f64>) -> String {
    let parts: Vec<String> = v.into_iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Random network and input for gradient checks: 1-3 state dims, 1-2
/// hidden layers of width 2-6, 1-3 action dims, parameters `U(-1, 1)`.
fn random_case(seed: u64, i: u64) -> (Vec<usize>, Vec<f64>, Vec<f64>, Vec<f64>, crate::rng::StreamRng) {
    let mut rng = stream(seed, 0, i, Domain::Oracle);
    let mut dims = vec![rng.random_range(1..=3)];
    for _ in 0..rng.random_range(1..=2) {
        dims.push(rng.random_range(2..=6));
    }
    dims.push(rng.random_range(1..=3));
    let ds = dims[0];
    let da = *dims.last().unwrap();
    let s: Vec<f64> = (0..ds).map(|_| rng.random_range(-2.0..2.0)).collect();
    let v: Vec<f64> = (0..da).map(|_| rng.random_range(-2.0..2.0)).collect();
    let a: Vec<f64> = (0..da).map(|_| rng.random_range(-2.0..2.0)).collect();
    (dims, s, v, a, rng)
}

/// Analytic score and transpose-Jacobian products against central
/// differences on random networks.
pub fn analytic_gradients(seed: u64, pairs: usize) -> Check {
    let name = "analytic gradients vs finite differences";
    Check::from_result(
        name,
        (|| {
            let mut worst_score: f64 = 0.0;
            let mut worst_vjp: f64 = 0.0;
            for i in 0..pairs as u64 {
                let (dims, s, v, a, mut rng) = random_case(seed, i);

                let gauss = GaussianPolicy::zeros(&dims)?;
                let theta: Vec<f64> = (0..gauss.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let gauss = GaussianPolicy::from_flat(&dims, &theta)?;
                let analytic = gauss.grad_log_prob(&s, &a);
                let mut probe = gauss.clone();
                let fd = finite_difference_grad(
                    |t| {
                        probe.set_flat_params(t).expect("finite parameters");
                        probe.log_prob(&s, &a)
                    },
                    &theta,
                    1e-5,
                )?;
                worst_score = worst_score.max(norm_rel_err(&analytic, &fd, 1e-3));

                let mlp = MlpParams::zeros(&dims)?;
                let theta: Vec<f64> = (0..mlp.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mlp = MlpParams::from_flat(&dims, &theta)?;
                let analytic = mlp.vjp(&s, &v)?;
                let mut probe = mlp.clone();
                let fd = finite_difference_grad(
                    |t| {
                        probe.set_flat(t).expect("matching length");
                        let out = probe.forward(&s).expect("matching input");
                        out.iter().zip(&v).map(|(o, w)| o * w).sum()
                    },
                    &theta,
                    1e-5,
                )?;
                worst_vjp = worst_vjp.max(norm_rel_err(&analytic, &fd, 1e-3));
            }
            let passed = worst_score < 1e-4 && worst_vjp < 1e-4;
            Ok((passed, format!("{pairs} nets, max rel err score {worst_score:.2e}, vjp {worst_vjp:.2e} (limit 1e-4)")))
        })(),
    )
}

/// `grad_a log p` on generated Langevin transitions equals `(sqrt(dt)/sigma) xi`.
pub fn noise_reconstruction(seed: u64, transitions: usize) -> Check {
    let name = "noise reconstruction";
    Check::from_result(
        name,
        (|| {
            let mut rng = stream(seed, 1, 0, Domain::Oracle);
            let mut worst: f64 = 0.0;
            for _ in 0..transitions {
                let d = rng.random_range(1..=4);
                let mut cfg = DoubleWellConfig::new((0..d).map(|_| rng.random_range(0.5..5.0)).collect());
                cfg.sigma = rng.random_range(0.5..2.0);
                cfg.dt = rng.random_range(1e-3..5e-2);
                let s: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let a: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let xi: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let next = langevin_step(&s, &a, &xi, &cfg)?;
                let g = grad_a_log_p(&s, &next, &a, &cfg)?;
                let scale = cfg.noise_score_scale();
                for (gi, x) in g.iter().zip(&xi) {
                    worst = worst.max((gi - scale * x).abs());
                }
            }
            Ok((worst <= 1e-12, format!("{transitions} transitions, max abs err {worst:.2e} (limit 1e-12)")))
        })(),
    )
}

fn well_env(max_steps: usize) -> Result<DoubleWell> {
    let mut cfg = DoubleWellConfig::new(vec![1.0, 1.0]);
    cfg.initial = InitialStateDistribution::UniformBox { lower: vec![-1.2, -1.2], upper: vec![0.5, 0.5] };
    cfg.max_steps = max_steps;
    DoubleWell::new(cfg)
}

/// A small Gaussian policy and deterministic policy for the double well,
/// with parameters spread out enough that every term is exercised.
fn well_policies(seed: u64, index: u64) -> Result<(GaussianPolicy, MlpParams)> {
    let mut rng = stream(seed, 2, index, Domain::Init);
    let mut gauss = GaussianPolicy::init(&[2, 8, 2], &mut rng)?;
    let theta: Vec<f64> = gauss.flat_params().iter().map(|_| rng.random_range(-0.5..0.5)).collect();
    gauss.set_flat_params(&theta)?;
    let mut det = MlpParams::init(&[2, 8, 2], &mut rng)?;
    let theta: Vec<f64> = det.flatten().iter().map(|_| rng.random_range(-0.5..0.5)).collect();
    det.set_flat(&theta)?;
    Ok((gauss, det))
}

/// Unbiased state-space estimates equal `z_hat` times the biased ones on
/// identical experience draws.
pub fn scaling_identity(seed: u64) -> Check {
    let name = "scaling identity";
    Check::from_result(
        name,
        (|| {
            let env = well_env(5_000)?;
            let (gauss, det) = well_policies(seed, 0)?;
            let mut worst: f64 = 0.0;
            for (b, m_fraction) in [1.0, 0.5, 0.1].into_iter().enumerate() {
                let b = b as u64;
                let batch = sample_batch(&env, &gauss, 16, seed, b)?;
                let buf = ExperienceBuffer::stochastic(&batch)?;
                let z = buf.stats().z_hat();
                let u =
                    state_space_pg(&buf, &gauss, z, m_fraction, false, &mut stream(seed, b, 0, Domain::Experience))?;
                let v = state_space_pg(&buf, &gauss, z, m_fraction, true, &mut stream(seed, b, 0, Domain::Experience))?;
                let scaled: Vec<f64> = v.grad.iter().map(|g| g * z).collect();
                worst = worst.max(max_rel_err(&u.grad, &scaled));

                let batch = sample_batch(&env, &det, 16, seed, 100 + b)?;
                let buf = ExperienceBuffer::deterministic(&batch, env.config())?;
                let z = buf.stats().z_hat();
                let cfg = env.config();
                let u = state_space_dpg(
                    &buf,
                    &det,
                    cfg,
                    z,
                    m_fraction,
                    false,
                    &mut stream(seed, b, 1, Domain::Experience),
                )?;
                let v =
                    state_space_dpg(&buf, &det, cfg, z, m_fraction, true, &mut stream(seed, b, 1, Domain::Experience))?;
                let scaled: Vec<f64> = v.grad.iter().map(|g| g * z).collect();
                worst = worst.max(max_rel_err(&u.grad, &scaled));
            }
            Ok((worst <= 1e-12, format!("max componentwise rel err {worst:.2e} (limit 1e-12)")))
        })(),
    )
}

/// With every experience used, the state-space estimators coincide with the
/// reward-to-go trajectory estimators.
pub fn collapse_identity(seed: u64, batches: usize) -> Check {
    let name = "collapse identity";
    Check::from_result(
        name,
        (|| {
            let env = well_env(5_000)?;
            let cfg = env.config();
            let mut worst: f64 = 0.0;
            for b in 0..batches as u64 {
                let (gauss, det) = well_policies(seed, 1 + b)?;
                let k = 1 + (b as usize % 7) * 3;
                let batch = sample_batch(&env, &gauss, k, seed, 1_000 + b)?;
                let traj = trajectory_pg(&batch, &gauss, PgVariant::RewardToGo, &BaselineKind::None)?;
                let buf = ExperienceBuffer::stochastic(&batch)?;
                let z = estimate_z(&batch)?;
                let state = state_space_pg(&buf, &gauss, z, 1.0, false, &mut stream(seed, b, 0, Domain::Experience))?;
                worst = worst.max(max_rel_err(&traj.grad, &state.grad));

                let batch = sample_batch(&env, &det, k, seed, 2_000 + b)?;
                let traj = trajectory_dpg(&batch, &det, cfg, DpgVariant::RewardToGoNext)?;
                let buf = ExperienceBuffer::deterministic(&batch, cfg)?;
                let z = estimate_z(&batch)?;
                let state =
                    state_space_dpg(&buf, &det, cfg, z, 1.0, false, &mut stream(seed, b, 1, Domain::Experience))?;
                worst = worst.max(max_rel_err(&traj.grad, &state.grad));
            }
            Ok((worst <= 1e-10, format!("{batches} batches, max componentwise rel err {worst:.2e} (limit 1e-10)")))
        })(),
    )
}

/// Three transient states and a terminal one, two actions.
pub fn oracle_mdp() -> Result<(TabularMdp, SoftmaxTabularPolicy)> {
    let mdp = TabularMdp::new(
        3,
        vec![
            vec![vec![0.2, 0.5, 0.1, 0.2], vec![0.6, 0.1, 0.3, 0.0]],
            vec![vec![0.1, 0.2, 0.4, 0.3], vec![0.3, 0.3, 0.0, 0.4]],
            vec![vec![0.0, 0.3, 0.2, 0.5], vec![0.5, 0.2, 0.2, 0.1]],
            vec![vec![0.0, 0.0, 0.0, 1.0]; 2],
        ],
        vec![vec![-1.0, -0.5], vec![-2.0, -0.2], vec![0.5, -1.5], vec![0.0, 0.0]],
        vec![0.5, 0.3, 0.2, 0.0],
    )?;
    let policy = SoftmaxTabularPolicy::with_logits(&mdp, vec![0.3, -0.4, 0.1, 0.6, -0.5, 0.2])?;
    Ok((mdp, policy))
}

/// Monte Carlo return and `E[N + 1]` on the tabular MDP against the linear solves.
pub fn tabular_values(seed: u64, k: usize) -> Check {
    let name = "tabular return and hitting time";
    Check::from_result(
        name,
        (|| {
            let (mdp, policy) = oracle_mdp()?;
            let j = exact_expected_return(&mdp, &policy)?;
            let z = exact_expected_hitting_time(&mdp, &policy)?;
            let batch = sample_batch(&mdp, &policy, k, seed, 3)?;
            let ret = MeanSe::of(&batch.iter().map(Trajectory::total_return).collect::<Vec<_>>());
            let visits = MeanSe::of(&batch.iter().map(|t| t.len() as f64).collect::<Vec<_>>());
            let zj = ret.z_score(&MeanSe { mean: j, se: 0.0 });
            let zz = visits.z_score(&MeanSe { mean: z, se: 0.0 });
            let same = (visits.mean - estimate_z(&batch)?).abs() < 1e-9;
            Ok((
                zj < 4.0 && zz < 3.0 && same,
                format!(
                    "J exact {j:.5} MC {:.5} ({zj:.2} SE, limit 4); Z exact {z:.5} MC {:.5} ({zz:.2} SE, limit 3)",
                    ret.mean, visits.mean
                ),
            ))
        })(),
    )
}

fn batched<F>(k: usize, per_batch: usize, f: F) -> Result<Vec<Vec<Vec<f64>>>>
where
    F: Fn(u64, usize) -> Result<Vec<Vec<f64>>> + Sync,
{
    let batches = k.div_ceil(per_batch);
    (0..batches).into_par_iter().map(|b| f(b as u64, per_batch.min(k - b * per_batch))).collect()
}

/// Per-estimator `MeanSe` over batch means. `rows[b][e]` is estimator `e` on batch `b`.
fn summarize(rows: &[Vec<Vec<f64>>], negate: bool) -> Vec<Vec<MeanSe>> {
    let n_est = rows.first().map_or(0, Vec::len);
    (0..n_est)
        .map(|e| {
            let per: Vec<Vec<f64>> =
                rows.iter().map(|r| r[e].iter().map(|g| if negate { -g } else { *g }).collect()).collect();
            MeanSe::of_rows(&per)
        })
        .collect()
}

const BATCH: usize = 1_000;

/// Score-function estimators on the tabular MDP against the exact gradient,
/// using means over batches of 1000 trajectories.
pub fn tabular_gradient(seed: u64, k: usize, negate: bool) -> Check {
    let name = "policy-gradient oracle (tabular)";
    Check::from_result(
        name,
        (|| {
            let (mdp, policy) = oracle_mdp()?;
            let exact = exact_policy_gradient(&mdp, &policy)?;
            let labels = ["traj full", "traj to-go", "traj baseline", "state m=1", "state m=0.5"];
            let rows = batched(k, BATCH, |b, n| {
                let batch = sample_batch(&mdp, &policy, n, seed, 10 + b)?;
                let buf = ExperienceBuffer::stochastic(&batch)?;
                let z = estimate_z(&batch)?;
                let mut rng = stream(seed, b, 2, Domain::Experience);
                let out: Vec<GradientEstimate> = vec![
                    trajectory_pg(&batch, &policy, PgVariant::FullReturn, &BaselineKind::None)?,
                    trajectory_pg(&batch, &policy, PgVariant::RewardToGo, &BaselineKind::None)?,
                    trajectory_pg(&batch, &policy, PgVariant::FullReturn, &BaselineKind::BatchMeanReturn)?,
                    state_space_pg(&buf, &policy, z, 1.0, false, &mut rng)?,
                    state_space_pg(&buf, &policy, z, 0.5, false, &mut rng)?,
                ];
                Ok(out.into_iter().map(|g| g.grad).collect())
            })?;
            let stats = summarize(&rows, negate);
            let zs: Vec<f64> = stats.iter().map(|s| max_z(s, &exact)).collect();
            let passed = zs.iter().all(|z| *z < 3.0);
            let detail = labels.iter().zip(&zs).map(|(l, z)| format!("{l} {z:.2}")).collect::<Vec<_>>().join(", ");
            Ok((passed, format!("K={k}, max |z| per estimator: {detail} (limit 3); exact grad {}", fmt_vec(exact))))
        })(),
    )
}

/// One-dimensional double well with an affine policy `mu(s) = w s + b`.
pub fn dpg_oracle_problem() -> Result<(DoubleWell, MlpParams)> {
    let cfg = DoubleWellConfig::new(vec![1.0]);
    let env = DoubleWell::new(cfg)?;
    let policy = MlpParams::from_flat(&[1, 1], &[0.5, 1.0])?;
    Ok((env, policy))
}

/// Model-based deterministic estimators against a common-random-number
/// finite-difference estimate of `grad J`.
pub fn dpg_oracle(seed: u64, k: usize, negate: bool) -> Check {
    let name = "deterministic-gradient oracle (1-D double well)";
    Check::from_result(
        name,
        (|| {
            let (env, policy) = dpg_oracle_problem()?;
            let cfg = env.config();
            let fd = crn_fd_gradient(&env, &policy, DPG_FD_EPS, k, seed)?;
            let labels = ["traj full", "traj to-go-next", "state m=1", "state m=0.5"];
            let rows = batched(k, BATCH, |b, n| {
                let batch = sample_batch(&env, &policy, n, seed, 20 + b)?;
                let buf = ExperienceBuffer::deterministic(&batch, cfg)?;
                let z = estimate_z(&batch)?;
                let mut rng = stream(seed, b, 3, Domain::Experience);
                let out = [
                    trajectory_dpg(&batch, &policy, cfg, DpgVariant::FullReturn)?,
                    trajectory_dpg(&batch, &policy, cfg, DpgVariant::RewardToGoNext)?,
                    state_space_dpg(&buf, &policy, cfg, z, 1.0, false, &mut rng)?,
                    state_space_dpg(&buf, &policy, cfg, z, 0.5, false, &mut rng)?,
                ];
                Ok(out.into_iter().map(|g| g.grad).collect())
            })?;
            let stats = summarize(&rows, negate);
            let zs: Vec<f64> =
                stats.iter().map(|s| s.iter().zip(&fd).map(|(e, f)| e.z_score(f)).fold(0.0, f64::max)).collect();
            let passed = zs.iter().all(|z| *z < 3.0);
            let detail = labels.iter().zip(&zs).map(|(l, z)| format!("{l} {z:.2}")).collect::<Vec<_>>().join(", ");
            Ok((
                passed,
                format!(
                    "K={k}, max |z| per estimator: {detail} (limit 3); FD grad {} +- {}",
                    fmt_vec(fd.iter().map(|m| m.mean)),
                    fmt_vec(fd.iter().map(|m| m.se))
                ),
            ))
        })(),
    )
}

/// Step for the common-random-number finite differences in [`dpg_oracle`].
pub const DPG_FD_EPS: f64 = 1e-2;

/// Geometric horizon against discounting on non-terminating reward streams.
pub fn lemma1(seed: u64, k: usize) -> Vec<Check> {
    let policy = NullPolicy { state_dim: 1, action_dim: 1 };
    let mut out = Vec::new();
    for (i, gamma) in [0.5, 0.9, 0.99].into_iter().enumerate() {
        let name = format!("geometric horizon vs discounting, gamma={gamma}");
        let result = (|| {
            let c = lemma1_check(&ConstantReward { value: 1.0 }, &policy, gamma, k, seed + i as u64)?;
            let ar = lemma1_check(&ArRewardStream { phi: 0.8 }, &policy, gamma, k, seed + 10 + i as u64)?;
            let mut passed = c.z_score() < 3.0 && ar.z_score() < 3.0;
            let mut detail = format!(
                "constant: {:.4} vs {:.4} ({:.2} SE); AR(1): {:.4} vs {:.4} ({:.2} SE)",
                c.geometric.mean,
                c.discounted.mean,
                c.z_score(),
                ar.geometric.mean,
                ar.discounted.mean,
                ar.z_score()
            );
            if gamma == 0.5 {
                let zc = c.geometric.z_score(&MeanSe { mean: 2.0, se: 0.0 });
                passed &= zc < 3.0;
                detail.push_str(&format!("; closed form 2 at {zc:.2} SE"));
            }
            Ok((passed, format!("{detail} (limit 3)")))
        })();
        out.push(Check::from_result(&name, result));
    }
    out
}

/// Geometric horizon on the tabular MDP against the discounted linear solve.
pub fn lemma1_tabular(seed: u64, k: usize) -> Check {
    let name = "geometric horizon vs discounting, tabular gamma=0.9";
    Check::from_result(
        name,
        (|| {
            let (mdp, policy) = oracle_mdp()?;
            let exact = exact_discounted_return(&mdp, &policy, 0.9)?;
            let r = lemma1_check(&mdp, &policy, 0.9, k, seed + 20)?;
            let zg = r.geometric.z_score(&MeanSe { mean: exact, se: 0.0 });
            let zd = r.discounted.z_score(&MeanSe { mean: exact, se: 0.0 });
            Ok((
                r.z_score() < 3.0 && zg < 3.0 && zd < 3.0,
                format!(
                    "exact {exact:.5}, geometric {:.5} ({zg:.2} SE), discounted {:.5} ({zd:.2} SE) (limit 3)",
                    r.geometric.mean, r.discounted.mean
                ),
            ))
        })(),
    )
}

/// Occupancy counts total `sum (N_k + 1)`; `Z-hat` of geometric hitting
/// times matches `1 / (1 - gamma)`.
pub fn lemma2_counting(seed: u64, k: usize) -> Check {
    let name = "occupancy counting and Z-hat";
    Check::from_result(
        name,
        (|| {
            let env = well_env(20_000)?;
            let (_, det) = well_policies(seed, 99)?;
            let batch = sample_batch(&env, &det, 64, seed, 4)?;
            let grid =
                GridSpec { x_coord: 0, y_coord: 1, x_range: (-2.0, 2.0), y_range: (-2.0, 2.0), cols: 40, rows: 40 };
            let hist = occupancy_histogram(&batch, grid)?;
            let expected: usize = batch.iter().map(|t| t.hitting_step() + 1).sum();
            let counted = hist.counts.iter().sum::<u64>() == expected as u64 && hist.total == expected as u64;

            let gamma = 0.5;
            let mut rng = stream(seed, 5, 0, Domain::Oracle);
            let geo = Geometric::new(1.0 - gamma).expect("valid probability");
            let draws: Vec<usize> = (0..k).map(|_| geo.sample(&mut rng) as usize).collect();
            let z = mean_visits(draws.iter().copied())?;
            let spread = MeanSe::of(&draws.iter().map(|&n| n as f64 + 1.0).collect::<Vec<_>>());
            let zscore = (z - 1.0 / (1.0 - gamma)).abs() / spread.se;

            let chain = TabularMdp::geometric(0.25, -1.0, 2)?;
            let pi = SoftmaxTabularPolicy::uniform(&chain);
            let chain_batch = sample_batch(&chain, &pi, k, seed, 6)?;
            let zc = estimate_z(&chain_batch)?;
            let exact = exact_expected_hitting_time(&chain, &pi)?;
            let chain_se = MeanSe::of(&chain_batch.iter().map(|t| t.len() as f64).collect::<Vec<_>>()).se;
            let zchain = (zc - exact).abs() / chain_se;
            Ok((
                counted && zscore < 3.0 && zchain < 3.0,
                format!(
                    "histogram total {} = sum(N+1) {expected}: {counted}; geometric Z-hat {z:.4} vs 2 ({zscore:.2} SE); \
                     chain Z-hat {zc:.4} vs {exact:.4} ({zchain:.2} SE) (limit 3)",
                    hist.total
                ),
            ))
        })(),
    )
}
