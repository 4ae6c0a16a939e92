//! Stopping-time statistics and the geometric-horizon view of discounting.

use rand_distr::{Distribution, Geometric};

use crate::env::{rollout_rewards, Environment, Trajectory};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::rng::StreamRng;

/// `Z-hat = (1/K) sum_k (N_k + 1)`.
pub fn estimate_z(batch: &[Trajectory]) -> Result<f64> {
    mean_visits(batch.iter().map(Trajectory::hitting_step))
}

/// Mean of `N + 1` over a sequence of hitting steps.
pub fn mean_visits<I: IntoIterator<Item = usize>>(hitting_steps: I) -> Result<f64> {
    let (count, sum) = hitting_steps.into_iter().fold((0usize, 0.0f64), |(c, s), n| (c + 1, s + n as f64 + 1.0));
    if count == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(sum / count as f64)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("discount factor must lie in (0, 1), got {gamma}")))
    }
}

/// Undiscounted return of a rollout truncated at `N_gamma ~ Geom(1 - gamma)`
/// on `{0, 1, 2, ...}` (so `P(N_gamma = m) = gamma^m (1 - gamma)`), or at
/// the hitting time if that comes first. `N_gamma` is drawn before the rollout.
pub fn geometric_horizon_return<E, P>(env: &E, policy: &P, gamma: f64, rng: &mut StreamRng) -> Result<f64>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    check_gamma(gamma)?;
    let horizon = Geometric::new(1.0 - gamma).map_err(|e| Error::Config(e.to_string()))?.sample(rng);
    let horizon = usize::try_from(horizon).unwrap_or(usize::MAX);
    let mut total = 0.0;
    rollout_rewards(env, policy, rng, horizon, |_, r| total += r)?;
    Ok(total)
}

/// `sum_n gamma^n r_n`, truncated once `gamma^n < tol`.
pub fn discounted_return<E, P>(env: &E, policy: &P, gamma: f64, tol: f64, rng: &mut StreamRng) -> Result<f64>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    check_gamma(gamma)?;
    // Largest n with gamma^n >= tol.
    let horizon = (tol.ln() / gamma.ln()).floor() as usize;
    let mut total = 0.0;
    let mut weight = 1.0;
    rollout_rewards(env, policy, rng, horizon, |_, r| {
        total += weight * r;
        weight *= gamma;
    })?;
    Ok(total)
}
