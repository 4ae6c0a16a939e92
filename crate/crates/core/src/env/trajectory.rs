use rayon::prelude::*;

use super::Environment;
use crate::error::{check_dim, Error, Result};
use crate::policy::Policy;
use crate::rng::{self, Domain, StreamRng};

/// One rollout `S_0, A_0, ..., S_N` stored in flat row-major buffers.
///
/// `states`, `actions` and `rewards` have `N + 1` rows. `noises` has `N` rows
/// (row `n` generated `states[n + 1]`) or none for deterministic dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    state_dim: usize,
    action_dim: usize,
    noise_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    noises: Vec<f64>,
    hitting_step: usize,
    censored: bool,
}

impl Trajectory {
    /// Assemble a trajectory from per-step rows; used by tests and tooling.
    pub fn from_parts(
        states: Vec<Vec<f64>>,
        actions: Vec<Vec<f64>>,
        rewards: Vec<f64>,
        noises: Vec<Vec<f64>>,
        censored: bool,
    ) -> Result<Self> {
        let len = states.len();
        if len == 0 {
            return Err(Error::InvalidState("trajectory needs at least one state".into()));
        }
        check_dim(len, actions.len())?;
        check_dim(len, rewards.len())?;
        if !noises.is_empty() {
            check_dim(len - 1, noises.len())?;
        }
        let state_dim = states[0].len();
        let action_dim = actions[0].len();
        let noise_dim = noises.first().map_or(0, Vec::len);
        for s in &states {
            check_dim(state_dim, s.len())?;
        }
        for a in &actions {
            check_dim(action_dim, a.len())?;
        }
        for x in &noises {
            check_dim(noise_dim, x.len())?;
        }
        Ok(Self {
            state_dim,
            action_dim,
            noise_dim,
            states: states.concat(),
            actions: actions.concat(),
            rewards,
            noises: noises.concat(),
            hitting_step: len - 1,
            censored,
        })
    }

    /// `N`.
    pub fn hitting_step(&self) -> usize {
        self.hitting_step
    }

    /// `N + 1`, the number of visited states.
    pub fn len(&self) -> usize {
        self.hitting_step + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn censored(&self) -> bool {
        self.censored
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn state(&self, n: usize) -> &[f64] {
        &self.states[n * self.state_dim..(n + 1) * self.state_dim]
    }

    pub fn action(&self, n: usize) -> &[f64] {
        &self.actions[n * self.action_dim..(n + 1) * self.action_dim]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn has_noise(&self) -> bool {
        self.noise_dim > 0 || self.hitting_step == 0
    }

    /// The increment `xi_{n+1}` that produced `states[n + 1]`.
    pub fn noise(&self, n: usize) -> &[f64] {
        &self.noises[n * self.noise_dim..(n + 1) * self.noise_dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.states.chunks_exact(self.state_dim.max(1)).take(self.len())
    }

    pub fn total_return(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Roll out `policy` from the initial distribution until the terminal set is
/// hit or `max_steps` transitions have been made.
///
/// The action at the terminal state is still drawn (it earns zero reward), so
/// every trajectory has `N + 1` state-action pairs.
pub fn sample_trajectory<E, P>(env: &E, policy: &P, rng: &mut StreamRng) -> Result<Trajectory>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    let ds = env.state_dim();
    let da = env.action_dim();
    let dn = env.noise_dim();
    check_dim(ds, policy.state_dim())?;
    check_dim(da, policy.action_dim())?;

    let max_steps = env.max_steps();
    let mut states = env.initial_state(rng);
    check_dim(ds, states.len())?;
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let mut noises = Vec::new();
    let mut next = vec![0.0; ds];
    let mut noise = vec![0.0; dn];
    let mut action = vec![0.0; da];

    let mut n = 0;
    let censored = loop {
        let s = &states[n * ds..(n + 1) * ds];
        policy.act(s, rng, &mut action);
        actions.extend_from_slice(&action);
        if env.is_terminal(s) {
            rewards.push(0.0);
            break false;
        }
        rewards.push(env.reward(s, &action));
        if n == max_steps {
            break true;
        }
        env.step(s, &action, rng, &mut next, &mut noise)?;
        states.extend_from_slice(&next);
        noises.extend_from_slice(&noise);
        n += 1;
    };

    Ok(Trajectory {
        state_dim: ds,
        action_dim: da,
        noise_dim: dn,
        states,
        actions,
        rewards,
        noises,
        hitting_step: n,
        censored,
    })
}

/// Sample `k` trajectories, trajectory `i` using the stream
/// `(seed, iteration, i, Trajectory)`. The result is independent of the
/// number of worker threads.
pub fn sample_batch<E, P>(env: &E, policy: &P, k: usize, seed: u64, iteration: u64) -> Result<Vec<Trajectory>>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    (0..k as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, iteration, i, Domain::Trajectory);
            sample_trajectory(env, policy, &mut rng)
        })
        .collect()
}

/// Stream the rewards `r_0, ..., r_L` of a rollout without storing it, where
/// `L = min(horizon, max_steps)` or the hitting step if that comes first.
/// Returns the last step index visited.
pub fn rollout_rewards<E, P, F>(env: &E, policy: &P, rng: &mut StreamRng, horizon: usize, mut f: F) -> Result<usize>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
    F: FnMut(usize, f64),
{
    let ds = env.state_dim();
    check_dim(ds, policy.state_dim())?;
    check_dim(env.action_dim(), policy.action_dim())?;
    let horizon = horizon.min(env.max_steps());
    let mut s = env.initial_state(rng);
    let mut next = vec![0.0; ds];
    let mut noise = vec![0.0; env.noise_dim()];
    let mut action = vec![0.0; env.action_dim()];
    let mut n = 0;
    loop {
        policy.act(&s, rng, &mut action);
        if env.is_terminal(&s) {
            return Ok(n);
        }
        f(n, env.reward(&s, &action));
        if n == horizon {
            return Ok(n);
        }
        env.step(&s, &action, rng, &mut next, &mut noise)?;
        std::mem::swap(&mut s, &mut next);
        n += 1;
    }
}
