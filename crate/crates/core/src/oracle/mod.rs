//! Ground truth independent of the Monte Carlo estimators: central finite
//! differences, exactly solvable tabular MDPs, the geometric-horizon
//! equivalence check, and a runnable verification suite.

pub mod checks;
mod streams;
mod tabular;

pub use checks::{run_suite, Check, SuiteOptions, SuiteReport};
pub use streams::{ArRewardStream, ConstantReward, NullPolicy};
pub use tabular::{
    analytic_policy_gradient, exact_discounted_return, exact_expected_hitting_time, exact_expected_return,
    exact_policy_gradient, SoftmaxTabularPolicy, TabularMdp, MAX_ACTIONS, MAX_STATES,
};

use rayon::prelude::*;

use crate::env::{sample_trajectory, Environment};
use crate::error::{Error, Result};
use crate::estimators::{discounted_return, geometric_horizon_return};
use crate::policy::{MlpParams, Parameterized, Policy};
use crate::rng::{stream, Domain};

/// Discounted sums are cut once `gamma^n` drops below this.
pub const DISCOUNT_TOL: f64 = 1e-12;

/// Central differences `(f(theta + eps e_i) - f(theta - eps e_i)) / (2 eps)`.
pub fn finite_difference_grad<F: FnMut(&[f64]) -> f64>(mut f: F, params: &[f64], eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {eps}")));
    }
    let mut theta = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        theta[i] = params[i] + eps;
        let up = f(&theta);
        theta[i] = params[i] - eps;
        let down = f(&theta);
        theta[i] = params[i];
        let g = (up - down) / (2.0 * eps);
        if !g.is_finite() {
            return Err(Error::Divergence(format!("objective is not finite around coordinate {i}")));
        }
        grad.push(g);
    }
    Ok(grad)
}

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        if samples.len() < 2 {
            return Self { mean, se: 0.0 };
        }
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self { mean, se: (var / n).sqrt() }
    }

    /// Per-coordinate mean and standard error over equally long rows.
    pub fn of_rows(rows: &[Vec<f64>]) -> Vec<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        (0..dim).map(|i| Self::of(&rows.iter().map(|r| r[i]).collect::<Vec<_>>())).collect()
    }

    /// `|a - b| / sqrt(se_a^2 + se_b^2)`; infinite when both errors vanish
    /// but the means differ.
    pub fn z_score(&self, other: &Self) -> f64 {
        let diff = (self.mean - other.mean).abs();
        let se = self.se.hypot(other.se);
        if diff == 0.0 {
            0.0
        } else {
            diff / se
        }
    }
}

/// Outcome of [`lemma1_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Report {
    pub geometric: MeanSe,
    pub discounted: MeanSe,
    pub combined_se: f64,
}

impl Lemma1Report {
    pub fn z_score(&self) -> f64 {
        self.geometric.z_score(&self.discounted)
    }
}

/// Runs `k` rollouts truncated at a geometric horizon and `k` independent
/// discounted rollouts, and compares the means.
pub fn lemma1_check<E, P>(env: &E, policy: &P, gamma: f64, k: usize, seed: u64) -> Result<Lemma1Report>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    if k == 0 {
        return Err(Error::EmptyBatch);
    }
    let geometric: Vec<f64> = (0..k as u64)
        .into_par_iter()
        .map(|i| geometric_horizon_return(env, policy, gamma, &mut stream(seed, 0, i, Domain::Horizon)))
        .collect::<Result<_>>()?;
    let discounted: Vec<f64> = (0..k as u64)
        .into_par_iter()
        .map(|i| discounted_return(env, policy, gamma, DISCOUNT_TOL, &mut stream(seed, 1, i, Domain::Horizon)))
        .collect::<Result<_>>()?;
    let geometric = MeanSe::of(&geometric);
    let discounted = MeanSe::of(&discounted);
    Ok(Lemma1Report { geometric, discounted, combined_se: geometric.se.hypot(discounted.se) })
}

/// Central-difference estimate of `grad J(mu_theta)` with common random
/// numbers: rollout `j` uses the same stream at `theta + eps e_i` and
/// `theta - eps e_i`. Returns per-coordinate mean and standard error.
pub fn crn_fd_gradient<E>(env: &E, params: &MlpParams, eps: f64, k: usize, seed: u64) -> Result<Vec<MeanSe>>
where
    E: Environment + ?Sized,
{
    if k == 0 {
        return Err(Error::EmptyBatch);
    }
    let theta = params.flat_params();
    let mut out = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let mut up = params.clone();
        let mut down = params.clone();
        let mut t = theta.clone();
        t[i] = theta[i] + eps;
        up.set_flat_params(&t)?;
        t[i] = theta[i] - eps;
        down.set_flat_params(&t)?;
        let diffs: Vec<f64> = (0..k as u64)
            .into_par_iter()
            .map(|j| {
                let hi = sample_trajectory(env, &up, &mut stream(seed, 0, j, Domain::Oracle))?;
                let lo = sample_trajectory(env, &down, &mut stream(seed, 0, j, Domain::Oracle))?;
                Ok((hi.total_return() - lo.total_return()) / (2.0 * eps))
            })
            .collect::<Result<_>>()?;
        out.push(MeanSe::of(&diffs));
    }
    Ok(out)
}
