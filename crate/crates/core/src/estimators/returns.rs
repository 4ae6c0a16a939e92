use crate::env::Trajectory;

/// Returns-to-go `G_n = sum_{m=n}^N r_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnProfile {
    pub returns_to_go: Vec<f64>,
}

impl ReturnProfile {
    pub fn from_rewards(rewards: &[f64]) -> Self {
        let mut returns_to_go = vec![0.0; rewards.len()];
        let mut acc = 0.0;
        for (g, &r) in returns_to_go.iter_mut().zip(rewards).rev() {
            acc += r;
            *g = acc;
        }
        Self { returns_to_go }
    }

    /// `G_0`.
    pub fn total(&self) -> f64 {
        self.returns_to_go.first().copied().unwrap_or(0.0)
    }

    /// `G_n`, with `G_{N+1} = 0`.
    pub fn at(&self, n: usize) -> f64 {
        self.returns_to_go.get(n).copied().unwrap_or(0.0)
    }
}

pub fn returns_from_trajectory(traj: &Trajectory) -> ReturnProfile {
    ReturnProfile::from_rewards(traj.rewards())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_sums() {
        let p = ReturnProfile::from_rewards(&[-1.0, -1.0, 0.0]);
        assert_eq!(p.returns_to_go, vec![-2.0, -1.0, 0.0]);
        assert_eq!(p.total(), -2.0);
        assert_eq!(p.at(3), 0.0);
        assert_eq!(ReturnProfile::from_rewards(&[0.0; 4]).returns_to_go, vec![0.0; 4]);
    }

    proptest! {
        #[test]
        fn recurrence_and_forward_sum(rewards in proptest::collection::vec(-10.0f64..10.0, 1..200)) {
            let p = ReturnProfile::from_rewards(&rewards);
            let forward: f64 = rewards.iter().sum();
            prop_assert!((p.total() - forward).abs() <= 1e-12 * (1.0 + forward.abs()) * rewards.len() as f64);
            for (n, r) in rewards.iter().enumerate() {
                prop_assert_eq!(p.at(n), r + p.at(n + 1));
            }
        }
    }
}
