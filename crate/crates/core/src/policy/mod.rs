//! Policies and the parameter-gradient primitives the estimators need.

pub mod checkpoint;
mod gaussian;
mod mlp;

pub use gaussian::{std_map, GaussianPolicy};
pub use mlp::{Dense, MlpParams, MlpWorkspace, OUTPUT_INIT_SCALE};

use crate::error::{check_dim, Error, Result};
use crate::rng::StreamRng;

/// Anything that picks actions.
pub trait Policy: Sync {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn act(&self, s: &[f64], rng: &mut StreamRng, out: &mut [f64]);
}

/// A flat parameter vector `theta` in the canonical order.
pub trait Parameterized {
    fn param_count(&self) -> usize;
    fn flat_params(&self) -> Vec<f64>;
    fn set_flat_params(&mut self, flat: &[f64]) -> Result<()>;
}

/// A stochastic policy with a differentiable log-density.
pub trait ScorePolicy: Policy + Parameterized {
    fn log_prob(&self, s: &[f64], a: &[f64]) -> f64;

    /// `grad += scale * grad_theta log pi_theta(s, a)`.
    fn accumulate_score(&self, s: &[f64], a: &[f64], scale: f64, grad: &mut [f64]);

    fn grad_log_prob(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.param_count()];
        self.accumulate_score(s, a, 1.0, &mut g);
        g
    }
}

impl Parameterized for MlpParams {
    fn param_count(&self) -> usize {
        MlpParams::param_count(self)
    }

    fn flat_params(&self) -> Vec<f64> {
        self.flatten()
    }

    fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence("non-finite policy parameters".into()));
        }
        self.set_flat(flat)
    }
}

/// A deterministic policy `mu_theta(s)`; the random stream is not touched.
impl Policy for MlpParams {
    fn state_dim(&self) -> usize {
        self.input_dim()
    }

    fn action_dim(&self) -> usize {
        self.output_dim()
    }

    fn act(&self, s: &[f64], _rng: &mut StreamRng, out: &mut [f64]) {
        let mut ws = self.workspace();
        out.copy_from_slice(self.forward_with(s, &mut ws));
    }
}

/// `mu_theta(s)`.
pub fn deterministic_action(params: &MlpParams, s: &[f64]) -> Result<Vec<f64>> {
    params.forward(s)
}

/// `grad_theta mu_theta(s)^T v`.
pub fn vjp_policy(params: &MlpParams, s: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    params.vjp(s, v)
}

/// `grad_theta log pi_theta(s, a)` with dimension checks.
pub fn grad_log_prob<P: ScorePolicy + ?Sized>(policy: &P, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
    check_dim(policy.state_dim(), s.len())?;
    check_dim(policy.action_dim(), a.len())?;
    Ok(policy.grad_log_prob(s, a))
}
