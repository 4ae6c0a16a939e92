//! Continuous mountain car that only stops at the goal.

use serde::{Deserialize, Serialize};

use super::{ensure_finite, Environment, InitialStateDistribution, DEFAULT_MAX_STEPS};
use crate::error::{check_dim, Error, Result};
use crate::rng::StreamRng;

const POWER: f64 = 0.0015;
const GRAVITY: f64 = 0.0025;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MountainCarConfig {
    pub min_position: f64,
    pub max_position: f64,
    pub max_speed: f64,
    pub goal_position: f64,
    pub action_cost: f64,
    pub initial: InitialStateDistribution,
    pub max_steps: usize,
}

impl Default for MountainCarConfig {
    fn default() -> Self {
        Self {
            min_position: -1.2,
            max_position: 0.6,
            max_speed: 0.07,
            goal_position: 0.45,
            action_cost: 0.1,
            initial: InitialStateDistribution::UniformBox { lower: vec![-0.6, 0.0], upper: vec![-0.4, 0.0] },
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

impl MountainCarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::Config("env.max_steps must be >= 1".into()));
        }
        if !(self.min_position < self.goal_position && self.goal_position <= self.max_position) {
            return Err(Error::Config("mountain car requires min_position < goal_position <= max_position".into()));
        }
        if !(self.max_speed > 0.0 && self.action_cost >= 0.0) {
            return Err(Error::Config("mountain car requires max_speed > 0 and action_cost >= 0".into()));
        }
        self.initial.validate(2)?;
        if let InitialStateDistribution::FixedPoint { point } = &self.initial {
            if point[0] >= self.goal_position {
                return Err(Error::Config("initial state lies in the goal region".into()));
            }
        }
        Ok(())
    }

    fn dynamics(&self, x: f64, v: f64, a: f64) -> (f64, f64) {
        let mut v_next = (v + POWER * a - GRAVITY * (3.0 * x).cos()).clamp(-self.max_speed, self.max_speed);
        let mut x_next = x + v_next;
        if x_next < self.min_position {
            x_next = self.min_position;
            v_next = 0.0;
        }
        (x_next, v_next)
    }
}

/// One step of the deterministic dynamics for an action already inside `[-1, 1]`.
///
/// Velocity is clipped to `[-0.07, 0.07]`; the left wall at `-1.2` is inelastic.
pub fn mountain_car_step(s: &[f64], a: &[f64]) -> Result<[f64; 2]> {
    check_dim(2, s.len())?;
    check_dim(1, a.len())?;
    ensure_finite(s, "state")?;
    ensure_finite(a, "action")?;
    let (x, v) = MountainCarConfig::default().dynamics(s[0], s[1], a[0]);
    Ok([x, v])
}

/// `-1 - 0.1 a^2` off the goal, `0` on it.
pub fn mountain_car_reward(s: &[f64], a: &[f64]) -> f64 {
    let cfg = MountainCarConfig::default();
    if s[0] >= cfg.goal_position {
        0.0
    } else {
        -1.0 - cfg.action_cost * a[0] * a[0]
    }
}

#[derive(Debug, Clone, Default)]
pub struct MountainCar {
    cfg: MountainCarConfig,
}

impl MountainCar {
    pub fn new(cfg: MountainCarConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &MountainCarConfig {
        &self.cfg
    }
}

impl Environment for MountainCar {
    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn noise_dim(&self) -> usize {
        0
    }

    fn max_steps(&self) -> usize {
        self.cfg.max_steps
    }

    fn initial_state(&self, rng: &mut StreamRng) -> Vec<f64> {
        self.cfg.initial.sample(rng)
    }

    fn is_terminal(&self, s: &[f64]) -> bool {
        s[0] >= self.cfg.goal_position
    }

    /// Rewards are charged for the applied (clipped) action.
    fn reward(&self, s: &[f64], a: &[f64]) -> f64 {
        if self.is_terminal(s) {
            0.0
        } else {
            let a = a[0].clamp(-1.0, 1.0);
            -1.0 - self.cfg.action_cost * a * a
        }
    }

    fn step(&self, s: &[f64], a: &[f64], _rng: &mut StreamRng, next: &mut [f64], _noise: &mut [f64]) -> Result<()> {
        if !(s[0].is_finite() && s[1].is_finite() && a[0].is_finite()) {
            return Err(Error::Divergence("non-finite mountain car state or action".into()));
        }
        let (x, v) = self.cfg.dynamics(s[0], s[1], a[0].clamp(-1.0, 1.0));
        next[0] = x;
        next[1] = v;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_from_rest_at_origin() {
        let s = mountain_car_step(&[0.0, 0.0], &[0.0]).unwrap();
        assert!((s[1] + 0.0025).abs() < 1e-15);
        assert!((s[0] + 0.0025).abs() < 1e-15);
    }

    #[test]
    fn step_into_goal_region() {
        let s = mountain_car_step(&[0.4, 0.05], &[1.0]).unwrap();
        // cos(1.2) = 0.36235775447667...
        let v = 0.05 + 0.0015 - 0.0025 * 1.2f64.cos();
        assert!((s[1] - v).abs() < 1e-15);
        assert!((s[1] - 0.0505941).abs() < 1e-7);
        assert!((s[0] - 0.4505941).abs() < 1e-7);
        assert!(MountainCar::default().is_terminal(&s));
    }

    #[test]
    fn left_wall_is_inelastic() {
        let s = mountain_car_step(&[-1.2, -0.07], &[-1.0]).unwrap();
        assert_eq!(s, [-1.2, 0.0]);
    }

    #[test]
    fn velocity_is_clipped() {
        let s = mountain_car_step(&[-0.5, 0.07], &[1.0]).unwrap();
        assert!(s[1] <= 0.07);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        assert!(matches!(mountain_car_step(&[f64::NAN, 0.0], &[0.0]), Err(Error::InvalidState(_))));
    }

    #[test]
    fn rewards() {
        assert!((mountain_car_reward(&[0.0, 0.0], &[1.0]) + 1.1).abs() < 1e-15);
        assert_eq!(mountain_car_reward(&[0.5, 0.0], &[0.7]), 0.0);
        assert_eq!(mountain_car_reward(&[0.0, 0.0], &[0.0]), -1.0);
    }

    #[test]
    fn terminal_set() {
        let env = MountainCar::default();
        assert!(env.is_terminal(&[0.45, 0.0]));
        assert!(!env.is_terminal(&[0.449, 0.07]));
    }
}
