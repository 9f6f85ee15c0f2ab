use maxrenyi_core::coupon::{coupon_collector, coupon_value, CouponMethod, CouponOptions};
use maxrenyi_core::entropy::{renyi_entropy, RenyiOrder, SimplexPoint};
use maxrenyi_core::envs::{random_cmp, random_policy};
use maxrenyi_core::gradient::{
    action_entropy_gradient, cosine, finite_difference_gradient, renyi_policy_gradient,
    shannon_instant_term, GradientMode,
};
use maxrenyi_core::mdp::{occupancy, TabularPolicy};
use maxrenyi_core::pipeline::{
    estimate_model, optimal_value, plan, CollectionMode, DatasetMeta, EmpiricalModel, EnvRef,
    PlanOptions, PlannerMethod, RewardFn, TransitionDataset, TransitionRecord,
};
use maxrenyi_core::solver::{maximize_entropy, EntropyTarget, SolverMethod, SolverOptions};
use proptest::prelude::*;

fn order(a: f64) -> RenyiOrder {
    RenyiOrder::new(a).unwrap()
}

fn simplex(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, 2..=max_len).prop_map(|w| {
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    })
}

fn cmp_case() -> impl Strategy<Value = (usize, usize, f64, u64)> {
    (2usize..=5, 2usize..=3, 0.3f64..0.95, any::<u64>())
}

fn logits(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| ((i * 7919) % 13) as f64 / 6.5 - 1.0)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn renyi_entropy_is_nonincreasing_in_order(d in simplex(8), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let h_lo = renyi_entropy(&d, order(lo));
        let h_hi = renyi_entropy(&d, order(hi));
        prop_assert!(h_hi <= h_lo + 1e-12);
        prop_assert!(h_lo <= (d.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn quadrature_agrees_with_inclusion_exclusion(d in simplex(9)) {
        let p = SimplexPoint::new(d).unwrap();
        let opts = CouponOptions::default();
        let q = coupon_collector(&p, CouponMethod::Quadrature, &opts).unwrap().value;
        let e = coupon_collector(&p, CouponMethod::InclusionExclusion, &opts).unwrap().value;
        prop_assert!((q - e).abs() / e < 1e-8);
    }

    #[test]
    fn coupon_value_ignores_cell_order(d in simplex(8), shift in 0usize..8) {
        let mut r = d.clone();
        r.rotate_left(shift % d.len());
        r.reverse();
        let (a, b) = (coupon_value(&d), coupon_value(&r));
        prop_assert!((a - b).abs() <= 1e-9 * a);
        prop_assert!(a >= coupon_value(&vec![1.0 / d.len() as f64; d.len()]) - 1e-9);
    }

    #[test]
    fn occupancy_is_a_distribution_satisfying_flow((n, a_n, gamma, seed) in cmp_case()) {
        let cmp = random_cmp(n, a_n, 1.0, gamma, seed).unwrap();
        let pi = random_policy(n, a_n, seed ^ 1).unwrap();
        let d = occupancy(&cmp, &pi, None).unwrap();
        let w = d.weights();
        prop_assert!(w.iter().all(|x| *x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        // d(s') = (1 - g) mu(s') + g sum_{s,a} d(s,a) P(s'|s,a)
        for t in 0..n {
            let inflow: f64 = (0..n)
                .flat_map(|s| (0..a_n).map(move |a| (s, a)))
                .map(|(s, a)| d.get(s, a) * cmp.row(s, a)[t])
                .sum();
            let lhs: f64 = (0..a_n).map(|a| d.get(t, a)).sum();
            prop_assert!((lhs - (1.0 - gamma) * cmp.init()[t] - gamma * inflow).abs() < 1e-10);
        }
    }

    #[test]
    fn exact_gradient_matches_finite_differences((n, a_n, gamma, seed) in cmp_case(), a in 0.2f64..=1.0) {
        let cmp = random_cmp(n, a_n, 1.0, gamma, seed).unwrap();
        let pi = TabularPolicy::from_logits(n, a_n, logits(n * a_n)).unwrap();
        let exact = renyi_policy_gradient(&cmp, &pi, order(a), GradientMode::Full).unwrap();
        let fd = finite_difference_gradient(&cmp, &pi, order(a), 1e-5).unwrap();
        if fd.norm() > 1e-6 {
            prop_assert!(cosine(&exact.values, &fd.values) > 1.0 - 1e-7);
        }
        for r in exact.row_sums() {
            prop_assert!(r.abs() < 1e-10);
        }
    }

    #[test]
    fn shannon_instant_term_is_the_action_entropy_gradient((n, a_n, gamma, seed) in cmp_case()) {
        let cmp = random_cmp(n, a_n, 1.0, gamma, seed).unwrap();
        let pi = random_policy(n, a_n, seed ^ 2).unwrap();
        let d = occupancy(&cmp, &pi, None).unwrap();
        let mass: Vec<f64> = d.weights().chunks(a_n).map(|r| r.iter().sum()).collect();
        let lhs = shannon_instant_term(&cmp, &pi).unwrap();
        let rhs = action_entropy_gradient(&mass, &pi);
        // -ln d(s,a) = -ln d(s) - ln pi(a|s); the state term projects to zero
        for (x, y) in lhs.iter().zip(&rhs) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn frank_wolfe_and_gradient_ascent_agree((n, a_n, gamma, seed) in cmp_case(), a in 0.1f64..=1.0) {
        let cmp = random_cmp(n, a_n, 1.0, gamma, seed).unwrap();
        let solve = |m| {
            maximize_entropy(EntropyTarget::Discounted(&cmp), order(a), m, &SolverOptions::default())
                .unwrap()
                .value
        };
        let (ga, fw) = (solve(SolverMethod::GradientAscent), solve(SolverMethod::FrankWolfe));
        prop_assert!((ga - fw).abs() < 1e-4, "{} vs {}", ga, fw);
        for k in 0..3 {
            let pi = random_policy(n, a_n, seed.wrapping_add(k)).unwrap();
            let h = renyi_entropy(occupancy(&cmp, &pi, None).unwrap().weights(), order(a));
            prop_assert!(h <= ga.max(fw) + 1e-9);
        }
    }

    #[test]
    fn value_iteration_is_a_bellman_fixed_point((n, a_n, gamma, seed) in cmp_case(), rs in prop::collection::vec(0.0f64..1.0, 15)) {
        let cmp = random_cmp(n, a_n, 1.0, gamma, seed).unwrap();
        let table = rs[..n * a_n].to_vec();
        let reward = RewardFn::stationary(n, a_n, table.clone()).unwrap();
        let model = EmpiricalModel::exact_discounted(&cmp);
        let pi = plan(&model, &reward, &PlanOptions::default()).unwrap();
        let pi = pi.stationary().unwrap();
        // greedy wrt its own Q: no action improves on the chosen one
        let v = {
            let chain = cmp.induced_chain(pi);
            let r_pi: Vec<f64> = (0..n)
                .map(|s| (0..a_n).map(|a| pi.prob(s, a) * table[s * a_n + a]).sum())
                .collect();
            let mut v = vec![0.0; n];
            for _ in 0..5_000 {
                v = (0..n)
                    .map(|s| r_pi[s] + gamma * (0..n).map(|t| chain[s * n + t] * v[t]).sum::<f64>())
                    .collect();
            }
            v
        };
        for s in 0..n {
            let q = |a: usize| {
                table[s * a_n + a] + gamma * cmp.row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum::<f64>()
            };
            let best = (0..a_n).map(q).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((v[s] - best).abs() < 1e-8);
        }
        let (_, j) = optimal_value(EnvRef::Discounted(&cmp), &reward).unwrap();
        let direct: f64 = v.iter().zip(cmp.init()).map(|(x, m)| x * m).sum();
        prop_assert!((j - direct).abs() < 1e-8);
    }

    #[test]
    fn model_estimate_ignores_record_order(records in prop::collection::vec((0usize..3, 0usize..2, 0usize..3), 1..60), seed in any::<u64>()) {
        let meta = DatasetMeta {
            mode: CollectionMode::DiscountedGeometric,
            source: "test".into(),
            trajectories: 1,
            seed: 0,
            n_states: 3,
            n_actions: 2,
            horizon: None,
            gamma: Some(0.9),
            components: Vec::new(),
        };
        let recs: Vec<TransitionRecord> = records
            .iter()
            .map(|&(s, a, s2)| TransitionRecord { s, a, s2, h: None })
            .collect();
        let mut shuffled = recs.clone();
        let k = (seed as usize) % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        let a = estimate_model(&TransitionDataset { meta: meta.clone(), records: recs }).unwrap();
        let b = estimate_model(&TransitionDataset { meta, records: shuffled }).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn batch_constrained_keeps_to_seen_actions(records in prop::collection::vec((0usize..3, 0usize..2, 0usize..3), 1..20), rs in prop::collection::vec(0.0f64..1.0, 6)) {
        let meta = DatasetMeta {
            mode: CollectionMode::DiscountedGeometric,
            source: "test".into(),
            trajectories: 1,
            seed: 0,
            n_states: 3,
            n_actions: 2,
            horizon: None,
            gamma: Some(0.9),
            components: Vec::new(),
        };
        let records = records
            .iter()
            .map(|&(s, a, s2)| TransitionRecord { s, a, s2, h: None })
            .collect();
        let model = estimate_model(&TransitionDataset { meta, records }).unwrap();
        let reward = RewardFn::stationary(3, 2, rs).unwrap();
        let opts = PlanOptions { method: PlannerMethod::BatchConstrained, ..PlanOptions::default() };
        let pi = plan(&model, &reward, &opts).unwrap();
        let pi = pi.stationary().unwrap();
        for s in 0..3 {
            let any_seen = (0..2).any(|a| model.is_seen(0, s, a));
            for a in 0..2 {
                if !any_seen {
                    prop_assert!((pi.prob(s, a) - 0.5).abs() < 1e-12);
                } else if !model.is_seen(0, s, a) {
                    prop_assert_eq!(pi.prob(s, a), 0.0);
                }
            }
        }
    }
}
