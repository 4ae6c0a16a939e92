//! Non-terminating reward streams for the geometric-horizon check.

use rand_distr::{Distribution, StandardNormal};

use crate::env::Environment;
use crate::error::Result;
use crate::policy::Policy;
use crate::rng::StreamRng;

/// A never-terminating chain paying `value` at every step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantReward {
    pub value: f64,
}

impl Environment for ConstantReward {
    fn state_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn noise_dim(&self) -> usize {
        0
    }

    fn max_steps(&self) -> usize {
        usize::MAX
    }

    fn initial_state(&self, _rng: &mut StreamRng) -> Vec<f64> {
        vec![0.0]
    }

    fn is_terminal(&self, _s: &[f64]) -> bool {
        false
    }

    fn reward(&self, _s: &[f64], _a: &[f64]) -> f64 {
        self.value
    }

    fn step(&self, s: &[f64], _a: &[f64], _rng: &mut StreamRng, next: &mut [f64], _noise: &mut [f64]) -> Result<()> {
        next.copy_from_slice(s);
        Ok(())
    }
}

/// A stationary AR(1) state `x' = phi x + sqrt(1 - phi^2) xi` started from
/// `N(0, 1)`, paying `1 + x + a` per step and never terminating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArRewardStream {
    pub phi: f64,
}

impl Environment for ArRewardStream {
    fn state_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn noise_dim(&self) -> usize {
        1
    }

    fn max_steps(&self) -> usize {
        usize::MAX
    }

    fn initial_state(&self, rng: &mut StreamRng) -> Vec<f64> {
        vec![StandardNormal.sample(rng)]
    }

    fn is_terminal(&self, _s: &[f64]) -> bool {
        false
    }

    fn reward(&self, s: &[f64], a: &[f64]) -> f64 {
        1.0 + s[0] + a[0]
    }

    fn step(&self, s: &[f64], _a: &[f64], rng: &mut StreamRng, next: &mut [f64], noise: &mut [f64]) -> Result<()> {
        let xi: f64 = StandardNormal.sample(rng);
        noise[0] = xi;
        next[0] = self.phi * s[0] + (1.0 - self.phi * self.phi).sqrt() * xi;
        Ok(())
    }
}

/// Plays the zero action in a space of the given dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullPolicy {
    pub state_dim: usize,
    pub action_dim: usize,
}

impl Policy for NullPolicy {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn act(&self, _s: &[f64], _rng: &mut StreamRng, out: &mut [f64]) {
        out.fill(0.0);
    }
}
