use super::returns::returns_from_trajectory;
use super::BatchStats;
use crate::env::{DoubleWellConfig, Trajectory};
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperienceKind {
    /// `(s, a, G_n)` tuples.
    Stochastic,
    /// `(s, s', xi, G_{n+1})` tuples for model-based deterministic gradients.
    Deterministic,
}

/// Flattened per-step experience from a batch of trajectories; an empirical
/// sample from the state-space density.
///
/// One entry is stored per visited state, so a fully populated buffer holds
/// `sum_k (N_k + 1)` entries. In the deterministic layout the entry for the
/// last visited state has no transition: its noise is zero and its weight is
/// `G_{N+1} = 0`.
#[derive(Debug, Clone)]
pub struct ExperienceBuffer {
    kind: ExperienceKind,
    state_dim: usize,
    action_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    next_states: Vec<f64>,
    noises: Vec<f64>,
    has_transition: Vec<bool>,
    reward_grads: Vec<f64>,
    weights: Vec<f64>,
    stats: BatchStats,
}

impl ExperienceBuffer {
    pub fn stochastic(batch: &[Trajectory]) -> Result<Self> {
        let stats = BatchStats::of(batch)?;
        let (ds, da) = (batch[0].state_dim(), batch[0].action_dim());
        let mut buf = Self::empty(ExperienceKind::Stochastic, ds, da, stats);
        for traj in batch {
            check_dim(ds, traj.state_dim())?;
            check_dim(da, traj.action_dim())?;
            let profile = returns_from_trajectory(traj);
            for n in 0..traj.len() {
                buf.states.extend_from_slice(traj.state(n));
                buf.actions.extend_from_slice(traj.action(n));
                buf.weights.push(profile.at(n));
            }
        }
        Ok(buf)
    }

    /// Deterministic layout for Langevin dynamics; `grad_a r` is evaluated at
    /// the recorded actions.
    pub fn deterministic(batch: &[Trajectory], cfg: &DoubleWellConfig) -> Result<Self> {
        let stats = BatchStats::of(batch)?;
        let d = cfg.dim();
        let mut buf = Self::empty(ExperienceKind::Deterministic, d, d, stats);
        let mut grad_r = vec![0.0; d];
        for traj in batch {
            check_dim(d, traj.state_dim())?;
            check_dim(d, traj.action_dim())?;
            if traj.hitting_step() > 0 && traj.noise_dim() != d {
                return Err(Error::MissingNoise);
            }
            let profile = returns_from_trajectory(traj);
            let last = traj.hitting_step();
            for n in 0..=last {
                let s = traj.state(n);
                buf.states.extend_from_slice(s);
                buf.actions.extend_from_slice(traj.action(n));
                cfg.grad_action_reward(s, traj.action(n), &mut grad_r);
                buf.reward_grads.extend_from_slice(&grad_r);
                if n < last {
                    buf.next_states.extend_from_slice(traj.state(n + 1));
                    buf.noises.extend_from_slice(traj.noise(n));
                    buf.has_transition.push(true);
                } else {
                    buf.next_states.extend_from_slice(s);
                    buf.noises.extend(std::iter::repeat_n(0.0, d));
                    buf.has_transition.push(false);
                }
                buf.weights.push(profile.at(n + 1));
            }
        }
        Ok(buf)
    }

    fn empty(kind: ExperienceKind, state_dim: usize, action_dim: usize, stats: BatchStats) -> Self {
        Self {
            kind,
            state_dim,
            action_dim,
            states: Vec::with_capacity(stats.visits * state_dim),
            actions: Vec::with_capacity(stats.visits * action_dim),
            next_states: Vec::new(),
            noises: Vec::new(),
            has_transition: Vec::new(),
            reward_grads: Vec::new(),
            weights: Vec::with_capacity(stats.visits),
            stats,
        }
    }

    pub fn kind(&self) -> ExperienceKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Statistics of the source batch (`K`, `sum (N_k + 1)`, ...).
    pub fn stats(&self) -> &BatchStats {
        &self.stats
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.action_dim..(i + 1) * self.action_dim]
    }

    /// `G_n` (stochastic) or `G_{n+1}` (deterministic).
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn next_state(&self, i: usize) -> Option<&[f64]> {
        self.has_transition
            .get(i)
            .copied()
            .filter(|&t| t)
            .map(|_| &self.next_states[i * self.state_dim..(i + 1) * self.state_dim])
    }

    pub fn noise(&self, i: usize) -> &[f64] {
        &self.noises[i * self.action_dim..(i + 1) * self.action_dim]
    }

    pub fn reward_grad(&self, i: usize) -> &[f64] {
        &self.reward_grads[i * self.action_dim..(i + 1) * self.action_dim]
    }

    /// Drop all entries (the buffer is on-policy and refilled every iteration).
    pub fn clear(&mut self) {
        self.states.clear();
        self.actions.clear();
        self.next_states.clear();
        self.noises.clear();
        self.has_transition.clear();
        self.reward_grads.clear();
        self.weights.clear();
    }
}
