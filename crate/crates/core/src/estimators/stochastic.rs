//! Score-function estimators for stochastic policies.

use std::fmt;
use std::sync::Arc;

use super::buffer::{ExperienceBuffer, ExperienceKind};
use super::returns::returns_from_trajectory;
use super::{BatchStats, GradientEstimate};
use crate::env::Trajectory;
use crate::error::{check_dim, Error, Result};
use crate::policy::ScorePolicy;
use crate::rng::StreamRng;

/// Return weight multiplying each score term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgVariant {
    /// `sum_{m=0}^N r_m` at every step.
    FullReturn,
    /// `sum_{m=n}^N r_m` at step `n`.
    RewardToGo,
}

/// A state function subtracted from the return weight.
pub type BaselineFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone, Default)]
pub enum BaselineKind {
    #[default]
    None,
    /// Mean total return of the *other* trajectories in the batch (zero when
    /// the batch has a single trajectory). Leaving the own trajectory out
    /// keeps the baseline independent of the score it multiplies.
    BatchMeanReturn,
    Custom(BaselineFn),
}

impl fmt::Debug for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::None => f.write_str("None"),
            Self::BatchMeanReturn => f.write_str("BatchMeanReturn"),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Trajectory policy gradient (REINFORCE with a random horizon):
///
/// `(1/K) sum_k sum_{n=0}^{N_k} grad log pi(S_n, A_n) (G - b(S_n))`
pub fn trajectory_pg<P: ScorePolicy + ?Sized>(
    batch: &[Trajectory],
    policy: &P,
    variant: PgVariant,
    baseline: &BaselineKind,
) -> Result<GradientEstimate> {
    let stats = BatchStats::of(batch)?;
    let totals: Vec<f64> = batch.iter().map(Trajectory::total_return).collect();
    let sum_totals: f64 = totals.iter().sum();
    let k = batch.len();

    let mut acc = vec![0.0; policy.param_count()];
    for (idx, traj) in batch.iter().enumerate() {
        check_dim(policy.state_dim(), traj.state_dim())?;
        check_dim(policy.action_dim(), traj.action_dim())?;
        let profile = returns_from_trajectory(traj);
        for n in 0..traj.len() {
            let s = traj.state(n);
            let g = match variant {
                PgVariant::FullReturn => profile.total(),
                PgVariant::RewardToGo => profile.at(n),
            };
            let b = match baseline {
                BaselineKind::None => 0.0,
                BaselineKind::BatchMeanReturn if k > 1 => (sum_totals - totals[idx]) / (k - 1) as f64,
                BaselineKind::BatchMeanReturn => 0.0,
                BaselineKind::Custom(f) => f(s),
            };
            let w = g - b;
            if w != 0.0 {
                policy.accumulate_score(s, traj.action(n), w, &mut acc);
            }
        }
    }
    let kf = k as f64;
    acc.iter_mut().for_each(|g| *g /= kf);
    GradientEstimate::new(acc, stats.z_hat(), &stats)
}

/// Draws `ceil(m_fraction * len)` distinct entries uniformly. When every
/// entry is selected they are visited in storage order.
pub(crate) fn select_entries(len: usize, m_fraction: f64, rng: &mut StreamRng) -> Result<Vec<usize>> {
    if len == 0 {
        return Err(Error::EmptyBatch);
    }
    if !(m_fraction > 0.0 && m_fraction <= 1.0) {
        return Err(Error::Config(format!("m_fraction must lie in (0, 1], got {m_fraction}")));
    }
    let m = ((m_fraction * len as f64).ceil() as usize).clamp(1, len);
    if m == len {
        Ok((0..len).collect())
    } else {
        Ok(rand::seq::index::sample(rng, len, m).into_vec())
    }
}

/// State-space policy gradient:
///
/// `z_hat * (1/M) sum_m grad log pi(S~_m, A~_m) G~_m`, or without the
/// `z_hat` factor when `biased` is set.
pub fn state_space_pg<P: ScorePolicy + ?Sized>(
    buffer: &ExperienceBuffer,
    policy: &P,
    z_hat: f64,
    m_fraction: f64,
    biased: bool,
    rng: &mut StreamRng,
) -> Result<GradientEstimate> {
    if buffer.kind() != ExperienceKind::Stochastic {
        return Err(Error::Config("state-space PG needs a stochastic experience buffer".into()));
    }
    let picks = select_entries(buffer.len(), m_fraction, rng)?;
    let mut acc = vec![0.0; policy.param_count()];
    for &i in &picks {
        let w = buffer.weight(i);
        if w != 0.0 {
            policy.accumulate_score(buffer.state(i), buffer.action(i), w, &mut acc);
        }
    }
    let m = picks.len() as f64;
    acc.iter_mut().for_each(|g| *g /= m);
    if !biased {
        acc.iter_mut().for_each(|g| *g *= z_hat);
    }
    GradientEstimate::new(acc, z_hat, buffer.stats())
}
