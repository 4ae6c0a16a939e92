//! Model-based deterministic policy gradients for Langevin dynamics.
//!
//! Every step contributes `grad_theta mu(S_n)^T v_n` with
//! `v_n = grad_a r(S_n, a) + G * grad_a log p(S_{n+1}, S_n, a)` at `a = mu(S_n)`.
//! For the Gaussian transition density the log-density gradient is
//! `(sqrt(dt) / sigma) xi_{n+1}`, so it is read off the stored increment.

use super::buffer::{ExperienceBuffer, ExperienceKind};
use super::returns::returns_from_trajectory;
use super::stochastic::select_entries;
use super::{BatchStats, GradientEstimate};
use crate::env::{DoubleWellConfig, Trajectory};
use crate::error::{check_dim, Error, Result};
use crate::policy::MlpParams;
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpgVariant {
    /// `G = sum_{m=0}^N r_m` for every step.
    FullReturn,
    /// `G = sum_{m=n+1}^N r_m` at step `n`, an estimate of `V(S_{n+1})`.
    RewardToGoNext,
}

/// `grad_a log p(s_next | s, a) = (s_next - s - (a - grad U(s)) dt) / sigma^2`.
pub fn grad_a_log_p(s: &[f64], s_next: &[f64], a: &[f64], cfg: &DoubleWellConfig) -> Result<Vec<f64>> {
    let d = cfg.dim();
    check_dim(d, s.len())?;
    check_dim(d, s_next.len())?;
    check_dim(d, a.len())?;
    let mut mean = vec![0.0; d];
    cfg.drift_mean(s, a, &mut mean);
    let var = cfg.sigma * cfg.sigma;
    Ok(s_next.iter().zip(&mean).map(|(x, m)| (x - m) / var).collect())
}

/// `v = grad_r + g * (scale * xi)`, shared by both estimator forms.
#[inline]
fn seed_vector(grad_r: &[f64], g: f64, noise_scale: f64, xi: Option<&[f64]>, out: &mut [f64]) -> bool {
    let mut nonzero = false;
    match xi {
        Some(xi) => {
            for ((o, &r), &x) in out.iter_mut().zip(grad_r).zip(xi) {
                *o = r + g * (noise_scale * x);
                nonzero |= *o != 0.0;
            }
        }
        None => {
            for (o, &r) in out.iter_mut().zip(grad_r) {
                *o = r;
                nonzero |= r != 0.0;
            }
        }
    }
    nonzero
}

/// Trajectory-based model-based DPG, averaged over the `K` trajectories.
pub fn trajectory_dpg(
    batch: &[Trajectory],
    policy: &MlpParams,
    cfg: &DoubleWellConfig,
    variant: DpgVariant,
) -> Result<GradientEstimate> {
    let stats = BatchStats::of(batch)?;
    let d = cfg.dim();
    check_dim(d, policy.input_dim())?;
    check_dim(d, policy.output_dim())?;
    let noise_scale = cfg.noise_score_scale();
    let mut ws = policy.workspace();
    let mut acc = vec![0.0; policy.param_count()];
    let mut grad_r = vec![0.0; d];
    let mut v = vec![0.0; d];

    for traj in batch {
        check_dim(d, traj.state_dim())?;
        check_dim(d, traj.action_dim())?;
        let last = traj.hitting_step();
        if last > 0 && traj.noise_dim() != d {
            return Err(Error::MissingNoise);
        }
        let profile = returns_from_trajectory(traj);
        for n in 0..=last {
            let s = traj.state(n);
            cfg.grad_action_reward(s, traj.action(n), &mut grad_r);
            let g = match variant {
                DpgVariant::FullReturn => profile.total(),
                DpgVariant::RewardToGoNext => profile.at(n + 1),
            };
            let xi = (n < last).then(|| traj.noise(n));
            if seed_vector(&grad_r, g, noise_scale, xi, &mut v) {
                policy.forward_with(s, &mut ws);
                policy.backward_with(&v, 1.0, &mut acc, &mut ws, None);
            }
        }
    }
    let k = batch.len() as f64;
    acc.iter_mut().for_each(|x| *x /= k);
    GradientEstimate::new(acc, stats.z_hat(), &stats)
}

/// State-space model-based DPG over `(s, s', xi, G_{n+1})` experiences,
/// scaled by `z_hat` unless `biased`.
pub fn state_space_dpg(
    buffer: &ExperienceBuffer,
    policy: &MlpParams,
    cfg: &DoubleWellConfig,
    z_hat: f64,
    m_fraction: f64,
    biased: bool,
    rng: &mut StreamRng,
) -> Result<GradientEstimate> {
    if buffer.kind() != ExperienceKind::Deterministic {
        return Err(Error::Config("state-space DPG needs a deterministic experience buffer".into()));
    }
    let d = cfg.dim();
    check_dim(d, policy.input_dim())?;
    check_dim(d, policy.output_dim())?;
    let picks = select_entries(buffer.len(), m_fraction, rng)?;
    let noise_scale = cfg.noise_score_scale();
    let mut ws = policy.workspace();
    let mut acc = vec![0.0; policy.param_count()];
    let mut v = vec![0.0; d];
    for &i in &picks {
        let xi = buffer.next_state(i).map(|_| buffer.noise(i));
        if seed_vector(buffer.reward_grad(i), buffer.weight(i), noise_scale, xi, &mut v) {
            policy.forward_with(buffer.state(i), &mut ws);
            policy.backward_with(&v, 1.0, &mut acc, &mut ws, None);
        }
    }
    let m = picks.len() as f64;
    acc.iter_mut().for_each(|x| *x /= m);
    if !biased {
        acc.iter_mut().for_each(|x| *x *= z_hat);
    }
    GradientEstimate::new(acc, z_hat, buffer.stats())
}
