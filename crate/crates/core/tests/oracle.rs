use randhorizon::oracle::checks::{dpg_oracle, oracle_mdp, tabular_gradient, tabular_values};
use randhorizon::oracle::SoftmaxTabularPolicy;
use randhorizon::oracle::{analytic_policy_gradient, exact_policy_gradient, finite_difference_grad, TabularMdp};
use randhorizon::policy::Parameterized;

#[test]
fn enumeration_gradient_agrees_with_analytic_and_finite_differences() {
    let (mdp, policy) = oracle_mdp().unwrap();
    let exact = exact_policy_gradient(&mdp, &policy).unwrap();
    let analytic = analytic_policy_gradient(&mdp, &policy).unwrap();
    let fd = finite_difference_grad(
        |theta| {
            let mut p = policy.clone();
            p.set_flat_params(theta).unwrap();
            randhorizon::oracle::exact_expected_return(&mdp, &p).unwrap()
        },
        &policy.flat_params(),
        1e-5,
    )
    .unwrap();
    for j in 0..exact.len() {
        assert!((exact[j] - analytic[j]).abs() < 1e-7, "{j}: {} vs {}", exact[j], analytic[j]);
        assert!((fd[j] - analytic[j]).abs() < 1e-7, "{j}: {} vs {}", fd[j], analytic[j]);
    }
}

#[test]
fn geometric_chain_gradient_vanishes_without_action_effects() {
    let mdp = TabularMdp::geometric(0.3, -1.0, 2).unwrap();
    let policy = SoftmaxTabularPolicy::uniform(&mdp);
    assert!(analytic_policy_gradient(&mdp, &policy).unwrap().iter().all(|g| g.abs() < 1e-12));
}

#[test]
fn monte_carlo_checks_pass_at_moderate_sample_size() {
    for check in [tabular_values(7, 20_000), tabular_gradient(7, 20_000, false)] {
        assert!(check.passed, "{check}");
    }
}

#[test]
fn negated_gradients_are_caught() {
    assert!(!tabular_gradient(7, 20_000, true).passed);
    assert!(!dpg_oracle(7, 20_000, true).passed);
}
