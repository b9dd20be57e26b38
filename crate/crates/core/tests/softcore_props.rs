use dinq::softcore::*;
use proptest::prelude::*;

fn q_prior(n: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    n.prop_flat_map(|n| {
        (
            prop::collection::vec(-50.0..50.0f64, n),
            prop::collection::vec(0.01..1.0f64, n),
        )
    })
}

fn build(q: Vec<f64>, w: &[f64]) -> (QVector, ActionDistribution) {
    (QVector::new(q).unwrap(), ActionDistribution::from_weights(w).unwrap())
}

fn lam(x: f64) -> InverseTemperature {
    InverseTemperature::new(x).unwrap()
}

proptest! {
    #[test]
    fn bounded_by_prior_mean_and_max((q, w) in q_prior(1..8), log_l in -8.0..8.0f64) {
        let (q, p) = build(q, &w);
        let v = soft_value(&q, &p, lam(10f64.powf(log_l))).unwrap();
        prop_assert!(v >= p.expectation(q.values()) - 1e-9);
        prop_assert!(v <= q.max() + 1e-9);
    }

    #[test]
    fn nondecreasing_in_lambda((q, w) in q_prior(1..8), a in -6.0..6.0f64, b in -6.0..6.0f64) {
        let (q, p) = build(q, &w);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let v_lo = soft_value(&q, &p, lam(10f64.powf(lo))).unwrap();
        let v_hi = soft_value(&q, &p, lam(10f64.powf(hi))).unwrap();
        prop_assert!(v_lo <= v_hi + 1e-9 * (1.0 + q.max().abs()));
    }

    #[test]
    fn shifting_q_shifts_value((q, w) in q_prior(1..8), c in -100.0..100.0f64, log_l in -3.0..3.0f64) {
        let shifted: Vec<f64> = q.iter().map(|x| x + c).collect();
        let (q, p) = build(q, &w);
        let l = lam(10f64.powf(log_l));
        let v = soft_value(&q, &p, l).unwrap();
        let vs = soft_value(&QVector::new(shifted).unwrap(), &p, l).unwrap();
        prop_assert!((vs - v - c).abs() <= 1e-9 * (1.0 + v.abs() + c.abs()));
    }

    #[test]
    fn robust_matches_naive_when_representable((q, w) in q_prior(1..8), log_l in -3.0..1.0f64) {
        let (q, p) = build(q, &w);
        let l = lam(10f64.powf(log_l));
        if let Ok(naive) = soft_value_naive(&q, &p, l) {
            let robust = soft_value(&q, &p, l).unwrap();
            prop_assert!((robust - naive).abs() <= 1e-9 * (1.0 + naive.abs()), "{robust} vs {naive}");
        }
    }

    #[test]
    fn soft_policy_attains_the_free_energy((q, w) in q_prior(1..8), log_l in -2.0..2.0f64) {
        let (q, p) = build(q, &w);
        let l = lam(10f64.powf(log_l));
        let pi = soft_policy(&q, &p, l).unwrap();
        let at_opt = lagrangian_objective(&pi, &q, &p, l).unwrap();
        let v = soft_value(&q, &p, l).unwrap();
        prop_assert!((at_opt - v).abs() <= 1e-8 * (1.0 + v.abs()));
    }

    #[test]
    fn no_policy_beats_the_soft_policy((q, w) in q_prior(2..6), other in prop::collection::vec(0.01..1.0f64, 6), log_l in -2.0..2.0f64) {
        let n = q.len();
        let (q, p) = build(q, &w);
        let l = lam(10f64.powf(log_l));
        let alt = ActionDistribution::from_weights(&other[..n]).unwrap();
        let best = lagrangian_objective(&soft_policy(&q, &p, l).unwrap(), &q, &p, l).unwrap();
        prop_assert!(lagrangian_objective(&alt, &q, &p, l).unwrap() <= best + 1e-9 * (1.0 + best.abs()));
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_self(w in prop::collection::vec(0.01..1.0f64, 1..8), v in prop::collection::vec(0.01..1.0f64, 8)) {
        let p = ActionDistribution::from_weights(&w).unwrap();
        let q = ActionDistribution::from_weights(&v[..w.len()]).unwrap();
        prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn huber_is_symmetric_and_continuous(d in -10.0..10.0f64) {
        prop_assert_eq!(huber_loss(d, 0.0), huber_loss(0.0, d));
        prop_assert!((huber_loss(1.0 + 1e-12, 0.0) - huber_loss(1.0 - 1e-12, 0.0)).abs() < 1e-10);
        prop_assert!(huber_loss(d, 0.0) <= d * d + 1e-12);
    }
}
