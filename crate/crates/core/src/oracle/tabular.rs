//! Small absorbing MDPs with discrete actions, solved exactly.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use super::finite_difference_grad;
use crate::env::{Environment, DEFAULT_MAX_STEPS};
use crate::error::{Error, Result};
use crate::policy::{Parameterized, Policy, ScorePolicy};
use crate::rng::StreamRng;

pub const MAX_STATES: usize = 8;
pub const MAX_ACTIONS: usize = 3;

/// A finite MDP with one absorbing, zero-reward terminal state.
///
/// States and actions are encoded as one-element vectors holding the index.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    terminal: usize,
    /// `transitions[s][a][s']`.
    transitions: Vec<Vec<Vec<f64>>>,
    /// `rewards[s][a]`.
    rewards: Vec<Vec<f64>>,
    initial: Vec<f64>,
    initial_sampler: WeightedIndex<f64>,
    max_steps: usize,
}

impl TabularMdp {
    pub fn new(
        terminal: usize,
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<f64>>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let n_states = transitions.len();
        let n_actions = transitions.first().map_or(0, Vec::len);
        let bad = |msg: String| Err(Error::Config(msg));
        if !(2..=MAX_STATES).contains(&n_states) || !(1..=MAX_ACTIONS).contains(&n_actions) {
            return bad(format!("tabular MDP needs 2..={MAX_STATES} states and 1..={MAX_ACTIONS} actions"));
        }
        if terminal >= n_states || rewards.len() != n_states || initial.len() != n_states {
            return bad("tabular MDP tables have inconsistent sizes".into());
        }
        for s in 0..n_states {
            if transitions[s].len() != n_actions || rewards[s].len() != n_actions {
                return bad(format!("state {s} has the wrong number of actions"));
            }
            for a in 0..n_actions {
                let row = &transitions[s][a];
                if row.len() != n_states || row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return bad(format!("P[{s}][{a}] is not a probability vector"));
                }
                if (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return bad(format!("P[{s}][{a}] does not sum to one"));
                }
                if !rewards[s][a].is_finite() {
                    return bad(format!("R[{s}][{a}] is not finite"));
                }
            }
        }
        for a in 0..n_actions {
            if transitions[terminal][a][terminal] != 1.0 || rewards[terminal][a] != 0.0 {
                return bad("terminal state must be absorbing with zero reward".into());
            }
        }
        if initial[terminal] != 0.0
            || initial.iter().any(|p| !(0.0..=1.0).contains(p))
            || (initial.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return bad("initial distribution must be a probability vector on transient states".into());
        }
        // Every transient state must reach the terminal under some action
        // sequence (softmax policies give every action positive mass).
        let mut reach = vec![false; n_states];
        reach[terminal] = true;
        loop {
            let mut changed = false;
            for s in 0..n_states {
                if !reach[s] && transitions[s].iter().any(|row| (0..n_states).any(|t| reach[t] && row[t] > 0.0)) {
                    reach[s] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if let Some(s) = reach.iter().position(|r| !r) {
            return bad(format!("terminal state is unreachable from state {s}"));
        }
        let initial_sampler = WeightedIndex::new(&initial).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            n_states,
            n_actions,
            terminal,
            transitions,
            rewards,
            initial,
            initial_sampler,
            max_steps: DEFAULT_MAX_STEPS,
        })
    }

    /// One transient state that terminates with probability `q` per step and
    /// pays `reward` per non-terminal step, whatever the action.
    pub fn geometric(q: f64, reward: f64, n_actions: usize) -> Result<Self> {
        let row = vec![1.0 - q, q];
        Self::new(
            1,
            vec![vec![row; n_actions], vec![vec![0.0, 1.0]; n_actions]],
            vec![vec![reward; n_actions], vec![0.0; n_actions]],
            vec![1.0, 0.0],
        )
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps.max(1);
        self
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn terminal(&self) -> usize {
        self.terminal
    }

    pub fn transition(&self, s: usize, a: usize) -> &[f64] {
        &self.transitions[s][a]
    }

    pub fn reward_of(&self, s: usize, a: usize) -> f64 {
        self.rewards[s][a]
    }

    /// Transient state indices in ascending order.
    pub fn transient(&self) -> Vec<usize> {
        (0..self.n_states).filter(|&s| s != self.terminal).collect()
    }

    /// `I - P^pi` restricted to transient states, `r^pi`, and `rho_0`.
    fn policy_system(&self, policy: &SoftmaxTabularPolicy) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
        self.check_policy(policy)?;
        let tr = self.transient();
        let n = tr.len();
        let mut a_mat = DMatrix::<f64>::identity(n, n);
        let mut r = DVector::<f64>::zeros(n);
        for (i, &s) in tr.iter().enumerate() {
            let probs = policy.probs(s);
            for (a, &pa) in probs.iter().enumerate() {
                r[i] += pa * self.rewards[s][a];
                for (j, &t) in tr.iter().enumerate() {
                    a_mat[(i, j)] -= pa * self.transitions[s][a][t];
                }
            }
        }
        let rho = DVector::from_iterator(n, tr.iter().map(|&s| self.initial[s]));
        Ok((a_mat, r, rho))
    }

    fn check_policy(&self, policy: &SoftmaxTabularPolicy) -> Result<()> {
        if policy.n_states != self.n_states || policy.n_actions != self.n_actions || policy.terminal != self.terminal {
            return Err(Error::DimensionMismatch {
                expected: self.n_states * self.n_actions,
                got: policy.n_states * policy.n_actions,
            });
        }
        Ok(())
    }
}

fn solve(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    a.lu().solve(b).ok_or_else(|| Error::Singular("I - P^pi is singular; terminal state unreachable".into()))
}

impl Environment for TabularMdp {
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
        self.max_steps
    }

    fn initial_state(&self, rng: &mut StreamRng) -> Vec<f64> {
        vec![self.initial_sampler.sample(rng) as f64]
    }

    fn is_terminal(&self, s: &[f64]) -> bool {
        s[0] as usize == self.terminal
    }

    fn reward(&self, s: &[f64], a: &[f64]) -> f64 {
        self.rewards[s[0] as usize][a[0] as usize]
    }

    fn step(&self, s: &[f64], a: &[f64], rng: &mut StreamRng, next: &mut [f64], _noise: &mut [f64]) -> Result<()> {
        let (s, a) = (s[0] as usize, a[0] as usize);
        if s >= self.n_states || a >= self.n_actions {
            return Err(Error::InvalidState(format!("state {s} / action {a} out of range")));
        }
        let row = &self.transitions[s][a];
        let u: f64 = rand::Rng::random(rng);
        let mut acc = 0.0;
        let mut pick = self.n_states - 1;
        for (t, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = t;
                break;
            }
        }
        next[0] = pick as f64;
        Ok(())
    }
}

/// `pi(s, a) = softmax(theta[s])[a]` on transient states; the terminal state
/// always plays action 0 and carries no parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxTabularPolicy {
    n_states: usize,
    n_actions: usize,
    terminal: usize,
    /// Logits for transient states in ascending state order, row-major.
    logits: Vec<f64>,
}

impl SoftmaxTabularPolicy {
    pub fn uniform(mdp: &TabularMdp) -> Self {
        let p = (mdp.n_states - 1) * mdp.n_actions;
        Self { n_states: mdp.n_states, n_actions: mdp.n_actions, terminal: mdp.terminal, logits: vec![0.0; p] }
    }

    pub fn with_logits(mdp: &TabularMdp, logits: Vec<f64>) -> Result<Self> {
        let mut p = Self::uniform(mdp);
        p.set_flat_params(&logits)?;
        Ok(p)
    }

    fn row(&self, s: usize) -> Option<usize> {
        match s.cmp(&self.terminal) {
            std::cmp::Ordering::Less => Some(s),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(s - 1),
        }
    }

    /// `pi(s, .)`.
    pub fn probs(&self, s: usize) -> Vec<f64> {
        let Some(row) = self.row(s) else {
            let mut p = vec![0.0; self.n_actions];
            p[0] = 1.0;
            return p;
        };
        let z = &self.logits[row * self.n_actions..(row + 1) * self.n_actions];
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = e.iter().sum();
        e.into_iter().map(|v| v / total).collect()
    }
}

impl Parameterized for SoftmaxTabularPolicy {
    fn param_count(&self) -> usize {
        self.logits.len()
    }

    fn flat_params(&self) -> Vec<f64> {
        self.logits.clone()
    }

    fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        crate::error::check_dim(self.logits.len(), flat.len())?;
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence("non-finite logits".into()));
        }
        self.logits.copy_from_slice(flat);
        Ok(())
    }
}

impl Policy for SoftmaxTabularPolicy {
    fn state_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn act(&self, s: &[f64], rng: &mut StreamRng, out: &mut [f64]) {
        let probs = self.probs(s[0] as usize);
        let u: f64 = rand::Rng::random(rng);
        let mut acc = 0.0;
        out[0] = (self.n_actions - 1) as f64;
        for (a, p) in probs.into_iter().enumerate() {
            acc += p;
            if u < acc {
                out[0] = a as f64;
                break;
            }
        }
    }
}

impl ScorePolicy for SoftmaxTabularPolicy {
    fn log_prob(&self, s: &[f64], a: &[f64]) -> f64 {
        self.probs(s[0] as usize)[a[0] as usize].ln()
    }

    fn accumulate_score(&self, s: &[f64], a: &[f64], scale: f64, grad: &mut [f64]) {
        let s = s[0] as usize;
        let Some(row) = self.row(s) else { return };
        let a = a[0] as usize;
        let probs = self.probs(s);
        for (b, p) in probs.into_iter().enumerate() {
            let ind = if a == b { 1.0 } else { 0.0 };
            grad[row * self.n_actions + b] += scale * (ind - p);
        }
    }
}

/// `J(pi) = rho_0 . V` with `V = r^pi + P^pi V` on transient states.
pub fn exact_expected_return(mdp: &TabularMdp, policy: &SoftmaxTabularPolicy) -> Result<f64> {
    let (a, r, rho) = mdp.policy_system(policy)?;
    Ok(rho.dot(&solve(a, &r)?))
}

/// `grad J` by central differences (step `1e-6`) of the exact return.
pub fn exact_policy_gradient(mdp: &TabularMdp, policy: &SoftmaxTabularPolicy) -> Result<Vec<f64>> {
    let mut probe = policy.clone();
    let mut failure = None;
    let grad = finite_difference_grad(
        |theta| {
            let value = probe.set_flat_params(theta).and_then(|()| exact_expected_return(mdp, &probe));
            value.unwrap_or_else(|e| {
                failure = Some(e);
                f64::NAN
            })
        },
        &policy.flat_params(),
        1e-6,
    );
    match failure {
        Some(e) => Err(e),
        None => grad,
    }
}

/// `Z = E[N] + 1`, with `E[N | S_0 = s] = T(s)` solving `T = 1 + P^pi T`.
pub fn exact_expected_hitting_time(mdp: &TabularMdp, policy: &SoftmaxTabularPolicy) -> Result<f64> {
    let (a, _, rho) = mdp.policy_system(policy)?;
    let ones = DVector::from_element(rho.len(), 1.0);
    Ok(rho.dot(&solve(a, &ones)?) + 1.0)
}

/// `rho_0 . V` with `V = r^pi + gamma P^pi V`: the infinite-horizon
/// discounted return (the terminal state pays nothing).
pub fn exact_discounted_return(mdp: &TabularMdp, policy: &SoftmaxTabularPolicy, gamma: f64) -> Result<f64> {
    let (a, r, rho) = mdp.policy_system(policy)?;
    let n = rho.len();
    let identity = DMatrix::<f64>::identity(n, n);
    // a = I - P^pi, so I - gamma P^pi = (1 - gamma) I + gamma a.
    let system = identity * (1.0 - gamma) + a * gamma;
    Ok(rho.dot(&solve(system, &r)?))
}

/// Policy-gradient theorem evaluated in closed form:
/// `grad J = sum_s eta(s) sum_a grad pi(s, a) Q(s, a)` with
/// `eta = rho_0 (I - P^pi)^{-1}`. Independent of the finite-difference route.
pub fn analytic_policy_gradient(mdp: &TabularMdp, policy: &SoftmaxTabularPolicy) -> Result<Vec<f64>> {
    let (a, r, rho) = mdp.policy_system(policy)?;
    let v = solve(a.clone(), &r)?;
    let eta = solve(a.transpose(), &rho)?;
    let tr = mdp.transient();
    let na = mdp.n_actions;
    let mut grad = vec![0.0; policy.param_count()];
    for (i, &s) in tr.iter().enumerate() {
        let probs = policy.probs(s);
        let q: Vec<f64> = (0..na)
            .map(|act| {
                let cont: f64 = tr.iter().enumerate().map(|(j, &t)| mdp.transitions[s][act][t] * v[j]).sum();
                mdp.rewards[s][act] + cont
            })
            .collect();
        let mean_q: f64 = probs.iter().zip(&q).map(|(p, q)| p * q).sum();
        for b in 0..na {
            // d pi(s, a) / d theta_b = pi(s, a) (1[a = b] - pi(s, b))
            grad[i * na + b] = eta[i] * probs[b] * (q[b] - mean_q);
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_chain_closed_forms() {
        let mdp = TabularMdp::geometric(0.5, -1.0, 2).unwrap();
        let pi = SoftmaxTabularPolicy::uniform(&mdp);
        assert!((exact_expected_return(&mdp, &pi).unwrap() + 2.0).abs() < 1e-12);
        assert!((exact_expected_hitting_time(&mdp, &pi).unwrap() - 3.0).abs() < 1e-12);

        let once = TabularMdp::geometric(1.0, -1.0, 2).unwrap();
        assert!((exact_expected_return(&once, &pi).unwrap() + 1.0).abs() < 1e-12);
        assert!((exact_expected_hitting_time(&once, &pi).unwrap() - 2.0).abs() < 1e-12);

        let zero = TabularMdp::geometric(0.3, 0.0, 2).unwrap();
        assert_eq!(exact_expected_return(&zero, &pi).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_actions_have_zero_gradient() {
        let mdp = TabularMdp::geometric(0.25, -1.0, 3).unwrap();
        let pi = SoftmaxTabularPolicy::with_logits(&mdp, vec![0.3, -0.2, 1.0]).unwrap();
        // Central differences of an O(1) objective at step 1e-6 carry ~1e-9 roundoff.
        for g in exact_policy_gradient(&mdp, &pi).unwrap() {
            assert!(g.abs() < 1e-8);
        }
        for g in analytic_policy_gradient(&mdp, &pi).unwrap() {
            assert!(g.abs() < 1e-12);
        }
    }

    #[test]
    fn one_state_gradient_by_hand() {
        // Action 0 pays -1, action 1 pays -2, both terminate w.p. 1:
        // J = -p0 - 2 p1, dJ/dtheta_b = p_b (R_b - J).
        let mdp = TabularMdp::new(
            1,
            vec![vec![vec![0.0, 1.0]; 2], vec![vec![0.0, 1.0]; 2]],
            vec![vec![-1.0, -2.0], vec![0.0, 0.0]],
            vec![1.0, 0.0],
        )
        .unwrap();
        let pi = SoftmaxTabularPolicy::with_logits(&mdp, vec![0.4, -0.1]).unwrap();
        let p = pi.probs(0);
        let j = -p[0] - 2.0 * p[1];
        let expected = [p[0] * (-1.0 - j), p[1] * (-2.0 - j)];
        let fd = exact_policy_gradient(&mdp, &pi).unwrap();
        let an = analytic_policy_gradient(&mdp, &pi).unwrap();
        for i in 0..2 {
            assert!((fd[i] - expected[i]).abs() < 1e-8);
            assert!((an[i] - expected[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_malformed_tables() {
        let ok = TabularMdp::geometric(0.5, -1.0, 1).unwrap();
        assert_eq!(ok.transient(), vec![0]);
        // No way out of state 0.
        let trapped = TabularMdp::new(
            1,
            vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]],
            vec![vec![-1.0], vec![0.0]],
            vec![1.0, 0.0],
        );
        assert!(matches!(trapped, Err(Error::Config(_))));
        let leaky = TabularMdp::new(
            1,
            vec![vec![vec![0.5, 0.4]], vec![vec![0.0, 1.0]]],
            vec![vec![-1.0], vec![0.0]],
            vec![1.0, 0.0],
        );
        assert!(leaky.is_err());
    }

    #[test]
    fn terminal_state_has_no_score() {
        let mdp = TabularMdp::geometric(0.5, -1.0, 2).unwrap();
        let pi = SoftmaxTabularPolicy::uniform(&mdp);
        assert_eq!(pi.grad_log_prob(&[1.0], &[0.0]), vec![0.0, 0.0]);
        assert_eq!(pi.grad_log_prob(&[0.0], &[1.0]), vec![-0.5, 0.5]);
    }
}
