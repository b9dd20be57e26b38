use dinq::exactdp::*;
use dinq::mdp::*;
use dinq::softcore::{ActionDistribution, InverseTemperature};

fn lam(x: f64) -> InverseTemperature {
    InverseTemperature::new(x).unwrap()
}

#[test]
fn soft_iteration_approaches_hard_iteration_as_lambda_grows() {
    let cfg = DpConfig::new(0.9, 1e-11, 100_000).unwrap();
    for seed in 0..10 {
        let mdp = make_garnet(8, 3, 3, 0.0, seed).unwrap();
        let prior = ActionDistribution::uniform(3).unwrap();
        let hard = value_iteration(&mdp, &cfg).unwrap();
        let soft = soft_value_iteration(&mdp, &prior, lam(1e8), &cfg).unwrap();
        assert!(soft.sup_distance(&hard) < 1e-4, "seed {seed}");
    }
}

#[test]
fn soft_fixed_point_is_monotone_in_lambda() {
    let cfg = DpConfig::new(0.8, 1e-11, 100_000).unwrap();
    let mdp = make_garnet(6, 3, 2, 0.0, 4).unwrap();
    let prior = ActionDistribution::uniform(3).unwrap();
    let mut previous: Option<QTable> = None;
    for l in [1e-3, 0.1, 1.0, 10.0, 1e3] {
        let q = soft_value_iteration(&mdp, &prior, lam(l), &cfg).unwrap();
        if let Some(prev) = &previous {
            assert!(q.as_slice().iter().zip(prev.as_slice()).all(|(a, b)| *a >= b - 1e-9));
        }
        previous = Some(q);
    }
}

#[test]
fn tiny_lambda_matches_prior_policy_evaluation() {
    let cfg = DpConfig::new(0.9, 1e-12, 100_000).unwrap();
    let mdp = make_garnet(6, 2, 3, 0.0, 9).unwrap();
    let prior = ActionDistribution::new(vec![0.3, 0.7]).unwrap();
    let soft = soft_value_iteration(&mdp, &prior, lam(1e-9), &cfg).unwrap();
    let pe = policy_evaluation(&mdp, &Policy::from_prior(&prior, 6), &cfg).unwrap();
    assert!(soft.sup_distance(&pe) < 1e-6);
}

#[test]
fn optimal_policy_evaluates_to_optimal_values() {
    let cfg = DpConfig::new(0.95, 1e-12, 100_000).unwrap();
    let mdp = make_gridworld(4, 4, &[(1, 1), (2, 1)], (3, 3), -0.05, 1.0).unwrap();
    let q_star = value_iteration(&mdp, &cfg).unwrap();
    let q_pi = policy_evaluation(&mdp, &Policy::greedy(&q_star), &cfg).unwrap();
    assert!(q_pi.sup_distance(&q_star) < 1e-8);
}

#[test]
fn finite_horizon_return_matches_monte_carlo() {
    let mdp = make_gridworld(3, 3, &[], (2, 2), -0.1, 1.0).unwrap();
    let policy = Policy::uniform(9, 4);
    let exact = finite_horizon_return(&mdp, &policy, 30).unwrap();
    let mut rng = RngStream::new(77);
    let episodes = 40_000;
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut s = mdp.reset(&mut rng);
        for _ in 0..30 {
            if mdp.is_terminal(s) {
                break;
            }
            let a = rng.below(4);
            let t = mdp.step(&mut rng, s, a).unwrap();
            total += t.r;
            s = t.s_next;
        }
    }
    assert!((total / episodes as f64 - exact).abs() < 0.02, "{} vs {exact}", total / episodes as f64);
}

#[test]
fn tabular_q_learning_finds_q_star() {
    let mdp = make_garnet(5, 2, 5, 0.0, 3).unwrap();
    let q_star = value_iteration(&mdp, &DpConfig::new(0.5, 1e-12, 10_000).unwrap()).unwrap();
    let cfg = TabularConfig {
        gamma: 0.5,
        steps: 100_000,
        alpha: AlphaSchedule::VisitPower(0.8),
        episode_len: 100,
        rule: TabularRule::Hard,
    };
    let q = run_tabular(&mdp, &cfg, &mut RngStream::new(5)).unwrap();
    assert!(q.sup_distance(&q_star) < 1e-2, "{}", q.sup_distance(&q_star));
}

#[test]
fn tabular_soft_q_learning_finds_the_soft_fixed_point() {
    let prior = ActionDistribution::uniform(2).unwrap();
    let mdp = make_garnet(5, 2, 5, 0.0, 3).unwrap();
    let fixed = soft_value_iteration(&mdp, &prior, lam(2.0), &DpConfig::new(0.5, 1e-12, 10_000).unwrap()).unwrap();
    let cfg = TabularConfig {
        gamma: 0.5,
        steps: 100_000,
        alpha: AlphaSchedule::VisitPower(0.8),
        episode_len: 100,
        rule: TabularRule::Soft { prior: &prior, lambda: lam(2.0) },
    };
    let q = run_tabular(&mdp, &cfg, &mut RngStream::new(6)).unwrap();
    assert!(q.sup_distance(&fixed) < 1e-2, "{}", q.sup_distance(&fixed));
}

#[test]
fn estimation_bias_of_q_star_is_zero() {
    let mdp = make_garnet(5, 2, 2, 0.0, 0).unwrap();
    let q = value_iteration(&mdp, &DpConfig::default()).unwrap();
    assert_eq!(estimation_bias(&q, &q, mdp.start()).unwrap(), 0.0);
    let shifted = QTable::from_vec(5, 2, q.as_slice().iter().map(|v| v + 0.5).collect()).unwrap();
    assert!((estimation_bias(&shifted, &q, mdp.start()).unwrap() - 0.5).abs() < 1e-12);
}
