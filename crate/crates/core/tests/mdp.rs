mod common;

use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

use behavior_irl::mdp::{
    argmax, mdp_vi, policy_value, reward_of, softmax_policy, Mdp, QFunction, RewardParams, StochasticPolicy,
    ViConfig,
};
use behavior_irl::rng::rng_from_seed;
use common::*;

fn bellman_residual(mdp: &Mdp, theta: &RewardParams, q: &QFunction) -> f64 {
    let v = q.state_values();
    let mut worst: f64 = 0.0;
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let backed = reward(mdp, theta, s, a)
                + mdp.discount()
                    * (0..mdp.num_states())
                        .map(|s2| mdp.transition(s, a, s2) * v[s2])
                        .sum::<f64>();
            worst = worst.max((backed - q.get(s, a)).abs());
        }
    }
    worst
}

#[test]
fn reward_matches_hand_dot_products() {
    let mut rng = rng_from_seed(3);
    let mdp = random_mdp(&mut rng, 2, 2, 3, 0.9);
    let theta = random_theta(&mut rng, 3);
    let r = reward_of(&mdp, &theta).unwrap();
    for s in 0..2 {
        for a in 0..2 {
            let phi = mdp.feature(s, a);
            let hand = phi[0] * theta.0[0] + phi[1] * theta.0[1] + phi[2] * theta.0[2];
            assert_abs_diff_eq!(r[s * 2 + a], hand, epsilon = 1e-15);
        }
    }
}

#[test]
fn greedy_policy_value_equals_optimal_values() {
    let mut rng = rng_from_seed(5);
    let tol = 1e-9;
    for _ in 0..20 {
        let mdp = random_mdp(&mut rng, 4, 3, 2, 0.9);
        let theta = random_theta(&mut rng, 2);
        let q = mdp_vi(&mdp, &theta, &ViConfig { tol, max_iter: 10_000 }).unwrap();
        let pol = StochasticPolicy::deterministic(3, &q.greedy());
        let pv = policy_value(&mdp, &theta, &pol, tol).unwrap();
        for (got, want) in pv.per_state.iter().zip(q.state_values()) {
            assert!((got - want).abs() <= 2.0 * tol, "{got} vs {want}");
        }
        let total: f64 = mdp.initial_dist().iter().zip(&pv.per_state).map(|(x, v)| x * v).sum();
        assert_abs_diff_eq!(pv.total, total, epsilon = 1e-12);
    }
}

#[test]
fn stochastic_policy_value_matches_linear_solve() {
    let mut rng = rng_from_seed(9);
    for _ in 0..20 {
        let (n_s, n_a) = (4, 3);
        let mdp = random_mdp(&mut rng, n_s, n_a, 2, 0.8);
        let theta = random_theta(&mut rng, 2);
        let mut probs = Vec::new();
        for _ in 0..n_s {
            let row: Vec<f64> = (0..n_a).map(|_| rng.random::<f64>()).collect();
            let z: f64 = row.iter().sum();
            probs.extend(row.iter().map(|x| x / z));
        }
        let pol = StochasticPolicy::from_probs(n_s, n_a, probs).unwrap();
        let mut a_mat = DMatrix::<f64>::identity(n_s, n_s);
        let mut b = DVector::<f64>::zeros(n_s);
        for s in 0..n_s {
            for a in 0..n_a {
                let p = pol.prob(s, a);
                b[s] += p * reward(&mdp, &theta, s, a);
                for s2 in 0..n_s {
                    a_mat[(s, s2)] -= 0.8 * p * mdp.transition(s, a, s2);
                }
            }
        }
        let exact = a_mat.lu().solve(&b).unwrap();
        let pv = policy_value(&mdp, &theta, &pol, 1e-10).unwrap();
        for s in 0..n_s {
            assert_abs_diff_eq!(pv.per_state[s], exact[s], epsilon = 1e-9);
        }
    }
}

#[test]
fn zero_weights_give_zero_values() {
    let mut rng = rng_from_seed(1);
    let mdp = random_mdp(&mut rng, 3, 2, 2, 0.9);
    let theta = RewardParams::zeros(2);
    let pol = StochasticPolicy::deterministic(2, &[0, 1, 0]);
    let pv = policy_value(&mdp, &theta, &pol, 1e-9).unwrap();
    assert!(pv.per_state.iter().all(|&v| v == 0.0));
    assert!(mdp_vi(&mdp, &theta, &ViConfig::default())
        .unwrap()
        .values()
        .iter()
        .all(|&v| v == 0.0));
}

#[test]
fn single_state_chain_is_geometric() {
    let mdp = Mdp::new(1, 1, 1, vec![1.0], vec![1.0], 0.9, vec![1.0]).unwrap();
    let pol = StochasticPolicy::deterministic(1, &[0]);
    let pv = policy_value(&mdp, &RewardParams(vec![1.0]), &pol, 1e-10).unwrap();
    assert_abs_diff_eq!(pv.per_state[0], 10.0, epsilon = 1e-9);
}

#[test]
fn softmax_gap_at_huge_confidence() {
    let q = QFunction::from_values(1, 2, vec![0.0, 0.01]).unwrap();
    let pi = softmax_policy(&q, 1e6).unwrap();
    let tv = 0.5 * (pi.prob(0, 0) + (1.0 - pi.prob(0, 1)));
    assert!(tv < 1e-6);
}

/// Random MDP with an extra all-ones feature so a constant reward shift is
/// a change of one weight.
fn with_constant_feature(mdp: &Mdp) -> Mdp {
    let (n_s, n_a, d) = (mdp.num_states(), mdp.num_actions(), mdp.feature_dim());
    let mut phi = Vec::new();
    let mut p = Vec::new();
    for s in 0..n_s {
        for a in 0..n_a {
            phi.extend_from_slice(mdp.feature(s, a));
            phi.push(1.0);
            p.extend_from_slice(mdp.transition_row(s, a));
        }
    }
    Mdp::new(n_s, n_a, d + 1, p, phi, mdp.discount(), mdp.initial_dist().to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn value_iteration_invariants(seed in any::<u64>(), n_s in 1usize..6, n_a in 1usize..4, dim in 1usize..4, nu in 0.1f64..0.95) {
        let mut rng = rng_from_seed(seed);
        let mdp = random_mdp(&mut rng, n_s, n_a, dim, nu);
        let theta = random_theta(&mut rng, dim);
        let cfg = ViConfig::default();
        let q = mdp_vi(&mdp, &theta, &cfg).unwrap();
        // Residual of the returned table is within one contraction of the stopping target.
        prop_assert!(bellman_residual(&mdp, &theta, &q) <= cfg.tol * (1.0 - nu) + 1e-10);
        let rmax = reward_of(&mdp, &theta).unwrap().iter().fold(0.0f64, |m, r| m.max(r.abs()));
        prop_assert!(q.values().iter().all(|v| v.is_finite() && v.abs() <= rmax / (1.0 - nu) + 1e-9));
    }

    #[test]
    fn constant_shift_moves_q_by_geometric_sum(seed in any::<u64>(), c in -1.0f64..1.0) {
        let mut rng = rng_from_seed(seed);
        let base = random_mdp(&mut rng, 3, 2, 2, 0.9);
        let mdp = with_constant_feature(&base);
        let mut theta = random_theta(&mut rng, 2).0;
        theta.push(0.0);
        let q0 = mdp_vi(&mdp, &RewardParams(theta.clone()), &ViConfig::default()).unwrap();
        *theta.last_mut().unwrap() = c;
        let q1 = mdp_vi(&mdp, &RewardParams(theta), &ViConfig::default()).unwrap();
        for (a, b) in q0.values().iter().zip(q1.values()) {
            prop_assert!((b - a - c / 0.1).abs() <= 2e-9);
        }
    }

    #[test]
    fn softmax_rows_and_argmax(values in proptest::collection::vec(-5.0f64..5.0, 12), eta in 0.001f64..50.0) {
        let q = QFunction::from_values(4, 3, values).unwrap();
        let pi = softmax_policy(&q, eta).unwrap();
        for s in 0..4 {
            let sum: f64 = pi.row(s).iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            let row = q.row(s);
            let mut sorted = row.to_vec();
            sorted.sort_by(|a, b| b.total_cmp(a));
            // Gaps below rounding resolution make the softmax row tie in floating point.
            if (sorted[0] - sorted[1]) * eta > 1e-9 {
                prop_assert_eq!(argmax(pi.row(s)), argmax(row));
            }
        }
    }

    #[test]
    fn softmax_scale_invariance(values in proptest::collection::vec(-5.0f64..5.0, 6), eta in 0.01f64..20.0, k in 0.1f64..10.0) {
        let q = QFunction::from_values(2, 3, values.clone()).unwrap();
        let scaled = QFunction::from_values(2, 3, values.iter().map(|v| v * k).collect()).unwrap();
        let a = softmax_policy(&q, eta).unwrap();
        let b = softmax_policy(&scaled, eta / k).unwrap();
        for s in 0..2 {
            for (x, y) in a.row(s).iter().zip(b.row(s)) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn greedy_dominates_enumerated_policies(seed in any::<u64>(), n_s in 1usize..5, n_a in 1usize..4) {
        let mut rng = rng_from_seed(seed);
        let mdp = random_mdp(&mut rng, n_s, n_a, 2, 0.9);
        let theta = random_theta(&mut rng, 2);
        let q = mdp_vi(&mdp, &theta, &ViConfig::default()).unwrap();
        let greedy = policy_value(&mdp, &theta, &StochasticPolicy::deterministic(n_a, &q.greedy()), 1e-10).unwrap();
        for pol in all_policies(n_s, n_a) {
            let v = deterministic_policy_value(&mdp, &theta, &pol);
            for (g, x) in greedy.per_state.iter().zip(&v) {
                prop_assert!(*g >= x - 1e-8);
            }
        }
    }
}
