//! Gradient estimators for random-horizon objectives.
//!
//! All estimators accumulate per-step contributions in trajectory-major order
//! (trajectory `k`, then step `n`) into a single running sum, so the
//! trajectory and state-space forms perform identical arithmetic on the same
//! data and differ only in the final normalization.

mod buffer;
mod deterministic;
mod horizon;
mod occupancy;
mod returns;
mod stochastic;

pub use buffer::{ExperienceBuffer, ExperienceKind};
pub use deterministic::{grad_a_log_p, state_space_dpg, trajectory_dpg, DpgVariant};
pub use horizon::{discounted_return, estimate_z, geometric_horizon_return, mean_visits};
pub use occupancy::{occupancy_histogram, GridSpec, OccupancyHistogram};
pub use returns::{returns_from_trajectory, ReturnProfile};
pub use stochastic::{state_space_pg, trajectory_pg, BaselineFn, BaselineKind, PgVariant};

use crate::env::Trajectory;
use crate::error::{Error, Result};

/// Summary statistics of the batch an estimate was computed from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats {
    /// Number of trajectories `K`.
    pub trajectories: usize,
    /// `sum_k (N_k + 1)`.
    pub visits: usize,
    pub mean_return: f64,
    pub mean_hitting_time: f64,
    pub censor_rate: f64,
}

impl BatchStats {
    pub fn of(batch: &[Trajectory]) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let k = batch.len() as f64;
        let visits = batch.iter().map(Trajectory::len).sum();
        let mean_return = batch.iter().map(Trajectory::total_return).sum::<f64>() / k;
        let mean_hitting_time = batch.iter().map(|t| t.hitting_step() as f64).sum::<f64>() / k;
        let censored = batch.iter().filter(|t| t.censored()).count() as f64;
        Ok(Self { trajectories: batch.len(), visits, mean_return, mean_hitting_time, censor_rate: censored / k })
    }

    /// `Z-hat = (1/K) sum_k (N_k + 1)`.
    pub fn z_hat(&self) -> f64 {
        self.visits as f64 / self.trajectories as f64
    }
}

/// A flat gradient over the policy parameters plus batch diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub grad: Vec<f64>,
    pub z_hat: f64,
    pub mean_return: f64,
    pub mean_hitting_time: f64,
    pub censor_rate: f64,
}

impl GradientEstimate {
    fn new(grad: Vec<f64>, z_hat: f64, stats: &BatchStats) -> Result<Self> {
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence("gradient estimate has non-finite entries".into()));
        }
        Ok(Self {
            grad,
            z_hat,
            mean_return: stats.mean_return,
            mean_hitting_time: stats.mean_hitting_time,
            censor_rate: stats.censor_rate,
        })
    }

    pub fn grad_norm(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}
