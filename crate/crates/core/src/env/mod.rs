//! Markov decision processes that stop at the first visit to a terminal set.

mod double_well;
mod mountain_car;
mod trajectory;

pub use double_well::{
    double_well_grad_u, double_well_potential, double_well_reward, langevin_step, DoubleWell, DoubleWellConfig,
};
pub use mountain_car::{mountain_car_reward, mountain_car_step, MountainCar, MountainCarConfig};
pub use trajectory::{rollout_rewards, sample_batch, sample_trajectory, Trajectory};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// A time-homogeneous MDP with a terminal set.
///
/// `step` must write the next state into `next`; environments with Gaussian
/// transition noise also write the standard-normal increment used into
/// `noise` (which has length [`Environment::noise_dim`]).
pub trait Environment: Sync {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Length of the per-step noise record, 0 for deterministic dynamics.
    fn noise_dim(&self) -> usize;
    fn max_steps(&self) -> usize;
    fn initial_state(&self, rng: &mut StreamRng) -> Vec<f64>;
    fn is_terminal(&self, s: &[f64]) -> bool;
    fn reward(&self, s: &[f64], a: &[f64]) -> f64;
    fn step(&self, s: &[f64], a: &[f64], rng: &mut StreamRng, next: &mut [f64], noise: &mut [f64]) -> Result<()>;
}

/// Initial state density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitialStateDistribution {
    FixedPoint { point: Vec<f64> },
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
}

impl InitialStateDistribution {
    pub fn dim(&self) -> usize {
        match self {
            Self::FixedPoint { point } => point.len(),
            Self::UniformBox { lower, .. } => lower.len(),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        crate::error::check_dim(dim, self.dim())?;
        match self {
            Self::FixedPoint { point } => {
                if point.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Config("initial point must be finite".into()));
                }
            }
            Self::UniformBox { lower, upper } => {
                crate::error::check_dim(dim, upper.len())?;
                for (lo, hi) in lower.iter().zip(upper) {
                    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                        return Err(Error::Config(format!(
                            "initial box bounds must be finite with lower <= upper, got [{lo}, {hi}]"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        match self {
            Self::FixedPoint { point } => point.clone(),
            Self::UniformBox { lower, upper } => {
                lower.iter().zip(upper).map(|(&lo, &hi)| if lo == hi { lo } else { rng.random_range(lo..hi) }).collect()
            }
        }
    }
}

/// Either of the two concrete environments, selected by configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EnvSpec {
    MountainCar(MountainCarConfig),
    DoubleWell(DoubleWellConfig),
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::MountainCar(c) => c.validate(),
            Self::DoubleWell(c) => c.validate(),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Environment>> {
        self.validate()?;
        Ok(match self {
            Self::MountainCar(c) => Box::new(MountainCar::new(c.clone())?),
            Self::DoubleWell(c) => Box::new(DoubleWell::new(c.clone())?),
        })
    }

    pub fn max_steps(&self) -> usize {
        match self {
            Self::MountainCar(c) => c.max_steps,
            Self::DoubleWell(c) => c.max_steps,
        }
    }
}

/// Default cap on the number of steps before a rollout is censored.
pub const DEFAULT_MAX_STEPS: usize = 1_000_000;

pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidState(format!("{what} has non-finite entries")))
    }
}
