//! Overdamped Langevin dynamics in a multi-well potential, Euler–Maruyama discretized.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ensure_finite, Environment, InitialStateDistribution, DEFAULT_MAX_STEPS};
use crate::error::{check_dim, Error, Result};
use crate::rng::StreamRng;

/// Potential `U(s) = sum_i alpha_i (s_i^2 - 1)^2` with Gaussian transitions
/// `N(s + (a - grad U(s)) dt, sigma^2 dt Id)`.
///
/// The terminal set is `{s_1 > 0, s_2 > 0, U~(s_1, s_2) <= target_level} x R^{d-2}`
/// where `U~` keeps only the first two terms of the potential. In one
/// dimension only the first coordinate is constrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DoubleWellConfig {
    pub alphas: Vec<f64>,
    pub sigma: f64,
    pub dt: f64,
    pub target_level: f64,
    pub initial: InitialStateDistribution,
    pub max_steps: usize,
}

impl Default for DoubleWellConfig {
    fn default() -> Self {
        Self::new(vec![1.0, 1.0])
    }
}

impl DoubleWellConfig {
    /// `sigma = sqrt(2)`, `dt = 0.01`, start in the well at `(-1, ..., -1)`.
    pub fn new(alphas: Vec<f64>) -> Self {
        let d = alphas.len();
        Self {
            alphas,
            sigma: std::f64::consts::SQRT_2,
            dt: 0.01,
            target_level: 0.25,
            initial: InitialStateDistribution::FixedPoint { point: vec![-1.0; d] },
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    pub fn dim(&self) -> usize {
        self.alphas.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::Config("env.alphas must be nonempty".into()));
        }
        if self.alphas.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::Config("env.alphas must be positive".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config("env.sigma must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config("env.dt must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("env.max_steps must be >= 1".into()));
        }
        self.initial.validate(self.dim())?;
        if let InitialStateDistribution::FixedPoint { point } = &self.initial {
            if self.is_terminal(point) {
                return Err(Error::Config("initial state lies in the target set".into()));
            }
        }
        Ok(())
    }

    /// `sqrt(dt) / sigma`, the factor mapping a stored increment to `grad_a log p`.
    pub fn noise_score_scale(&self) -> f64 {
        self.dt.sqrt() / self.sigma
    }

    pub fn is_terminal(&self, s: &[f64]) -> bool {
        let k = self.dim().min(2);
        if s[..k].iter().any(|&x| x <= 0.0) {
            return false;
        }
        let restricted: f64 = s[..k].iter().zip(&self.alphas).map(|(&x, &al)| al * (x * x - 1.0).powi(2)).sum();
        restricted <= self.target_level
    }

    pub fn reward(&self, s: &[f64], a: &[f64]) -> f64 {
        if self.is_terminal(s) {
            0.0
        } else {
            let sq: f64 = a.iter().map(|x| x * x).sum();
            -self.dt - 0.5 * sq * self.dt
        }
    }

    /// `grad_a r(s, a)`: `-a dt` off the target set, zero on it.
    pub fn grad_action_reward(&self, s: &[f64], a: &[f64], out: &mut [f64]) {
        if self.is_terminal(s) {
            out.iter_mut().for_each(|o| *o = 0.0);
        } else {
            for (o, &ai) in out.iter_mut().zip(a) {
                *o = -ai * self.dt;
            }
        }
    }

    /// Transition mean `s + (a - grad U(s)) dt`.
    pub fn drift_mean(&self, s: &[f64], a: &[f64], out: &mut [f64]) {
        for i in 0..s.len() {
            let x = s[i];
            let grad = 4.0 * self.alphas[i] * x * (x * x - 1.0);
            out[i] = x + (a[i] - grad) * self.dt;
        }
    }
}

pub fn double_well_potential(s: &[f64], alphas: &[f64]) -> Result<f64> {
    check_dim(alphas.len(), s.len())?;
    Ok(s.iter().zip(alphas).map(|(&x, &al)| al * (x * x - 1.0).powi(2)).sum())
}

/// Component `i` is `4 alpha_i s_i (s_i^2 - 1)`.
pub fn double_well_grad_u(s: &[f64], alphas: &[f64]) -> Result<Vec<f64>> {
    check_dim(alphas.len(), s.len())?;
    Ok(s.iter().zip(alphas).map(|(&x, &al)| 4.0 * al * x * (x * x - 1.0)).collect())
}

/// `s + (a - grad U(s)) dt + sigma sqrt(dt) xi`.
pub fn langevin_step(s: &[f64], a: &[f64], xi: &[f64], cfg: &DoubleWellConfig) -> Result<Vec<f64>> {
    let d = cfg.dim();
    check_dim(d, s.len())?;
    check_dim(d, a.len())?;
    check_dim(d, xi.len())?;
    let mut next = vec![0.0; d];
    cfg.drift_mean(s, a, &mut next);
    let scale = cfg.sigma * cfg.dt.sqrt();
    for (n, &x) in next.iter_mut().zip(xi) {
        *n += scale * x;
    }
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence(
            "Langevin step produced a non-finite state (dt too large or exploding policy)".into(),
        ));
    }
    Ok(next)
}

pub fn double_well_reward(s: &[f64], a: &[f64], cfg: &DoubleWellConfig) -> f64 {
    cfg.reward(s, a)
}

#[derive(Debug, Clone)]
pub struct DoubleWell {
    cfg: DoubleWellConfig,
    noise_scale: f64,
}

impl DoubleWell {
    pub fn new(cfg: DoubleWellConfig) -> Result<Self> {
        cfg.validate()?;
        let noise_scale = cfg.sigma * cfg.dt.sqrt();
        Ok(Self { cfg, noise_scale })
    }

    pub fn config(&self) -> &DoubleWellConfig {
        &self.cfg
    }
}

impl Environment for DoubleWell {
    fn state_dim(&self) -> usize {
        self.cfg.dim()
    }

    fn action_dim(&self) -> usize {
        self.cfg.dim()
    }

    fn noise_dim(&self) -> usize {
        self.cfg.dim()
    }

    fn max_steps(&self) -> usize {
        self.cfg.max_steps
    }

    fn initial_state(&self, rng: &mut StreamRng) -> Vec<f64> {
        self.cfg.initial.sample(rng)
    }

    fn is_terminal(&self, s: &[f64]) -> bool {
        self.cfg.is_terminal(s)
    }

    fn reward(&self, s: &[f64], a: &[f64]) -> f64 {
        self.cfg.reward(s, a)
    }

    fn step(&self, s: &[f64], a: &[f64], rng: &mut StreamRng, next: &mut [f64], noise: &mut [f64]) -> Result<()> {
        self.cfg.drift_mean(s, a, next);
        for (n, xi) in next.iter_mut().zip(noise.iter_mut()) {
            *xi = StandardNormal.sample(rng);
            *n += self.noise_scale * *xi;
        }
        ensure_finite(next, "state").map_err(|_| {
            Error::Divergence("Langevin step produced a non-finite state (dt too large or exploding policy)".into())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_vanishes_at_critical_points() {
        assert_eq!(double_well_grad_u(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(double_well_grad_u(&[1.0, 1.0], &[5.0, 2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn gradient_by_hand() {
        let g = double_well_grad_u(&[0.5], &[5.0]).unwrap();
        assert!((g[0] + 7.5).abs() < 1e-14);
    }

    #[test]
    fn gradient_dimension_mismatch() {
        assert!(matches!(double_well_grad_u(&[0.5, 1.0], &[5.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn langevin_step_at_minimum_without_noise() {
        let cfg = DoubleWellConfig::new(vec![5.0, 2.0]);
        let s = langevin_step(&[1.0, 1.0], &[0.0, 0.0], &[0.0, 0.0], &cfg).unwrap();
        assert_eq!(s, vec![1.0, 1.0]);
    }

    #[test]
    fn langevin_noise_displacement() {
        let cfg = DoubleWellConfig::new(vec![1.0]);
        let s = langevin_step(&[0.0], &[0.0], &[1.0], &cfg).unwrap();
        assert!((s[0] - 0.02f64.sqrt()).abs() < 1e-15);
        assert!((s[0] - 0.1414214).abs() < 1e-7);
    }

    #[test]
    fn langevin_divergence() {
        let mut cfg = DoubleWellConfig::new(vec![1.0]);
        cfg.dt = 1e300;
        assert!(matches!(langevin_step(&[1e200], &[0.0], &[0.0], &cfg), Err(Error::Divergence(_))));
    }

    #[test]
    fn reward_values() {
        let cfg = DoubleWellConfig::new(vec![1.0, 1.0]);
        let r = cfg.reward(&[-1.0, -1.0], &[2.0, 0.0]);
        assert!((r + 0.03).abs() < 1e-15);
        assert_eq!(cfg.reward(&[1.0, 1.0], &[2.0, 0.0]), 0.0);
        assert!((cfg.reward(&[-1.0, -1.0], &[0.0, 0.0]) + 0.01).abs() < 1e-15);
    }

    #[test]
    fn target_set() {
        let cfg = DoubleWellConfig::new(vec![5.0, 2.0, 0.5, 0.5]);
        assert!(cfg.is_terminal(&[1.0, 1.0, 1.0, 1.0]));
        assert!(cfg.is_terminal(&[1.0, 1.0, -3.0, 7.0]));
        assert!(!cfg.is_terminal(&[1.0, -1.0, 1.0, 1.0]));
        assert!(!cfg.is_terminal(&[0.5, 1.0, 1.0, 1.0]));
    }

    #[test]
    fn default_start_is_valid() {
        DoubleWellConfig::new(vec![1.0]).validate().unwrap();
        DoubleWellConfig::new(vec![5.0, 2.0, 0.5]).validate().unwrap();
    }
}
