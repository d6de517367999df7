mod common;

use common::{instance, STEP};
use proptest::prelude::*;
use tou_core::oracle::{brute_force_dp, convexity_violation};
use tou_core::policy::{compute_policy, cost_to_go, expected_cost, marginal_revenue, Threshold, DEFAULT_TOL};
use tou_core::sizing::capacity_marginal_revenue;
use tou_core::tariff::pi_max;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn policy_cost_matches_dp(inst in instance(), capacity in 0usize..=40) {
        let policy = compute_policy(&inst.scheme, &inst.demands, DEFAULT_TOL).unwrap();
        let cost = expected_cost(&policy, capacity, &inst.scheme, &inst.demands).unwrap();
        let (dp, _) = brute_force_dp(&inst.scheme, &inst.demands, capacity).unwrap();
        prop_assert!((cost - dp).abs() <= 1e-9, "policy {cost} dp {dp}");
    }

    #[test]
    fn one_virtual_sequence_serves_every_capacity(inst in instance()) {
        let policy = compute_policy(&inst.scheme, &inst.demands, DEFAULT_TOL).unwrap();
        for capacity in (0..=40).step_by(4) {
            let cost = expected_cost(&policy, capacity, &inst.scheme, &inst.demands).unwrap();
            let (dp, _) = brute_force_dp(&inst.scheme, &inst.demands, capacity).unwrap();
            prop_assert!((cost - dp).abs() <= 1e-9, "C={capacity}: policy {cost} dp {dp}");
        }
    }

    #[test]
    fn dp_values_are_convex(inst in instance(), capacity in 2usize..=40) {
        let (_, table) = brute_force_dp(&inst.scheme, &inst.demands, capacity).unwrap();
        for stage in &table.stages {
            prop_assert!(convexity_violation(&stage.value) <= 1e-9);
        }
    }

    #[test]
    fn marginal_revenue_is_nonincreasing(inst in instance()) {
        let policy = compute_policy(&inst.scheme, &inst.demands, DEFAULT_TOL).unwrap();
        let thresholds = policy.thresholds();
        for i in 0..inst.scheme.len() - 1 {
            let mut previous = f64::INFINITY;
            for level in 0..=40 {
                let mr = marginal_revenue(i, level, &thresholds, &inst.demands, &inst.scheme).unwrap();
                prop_assert!(mr <= previous + 1e-12, "period {i} level {level}: {mr} > {previous}");
                previous = mr;
            }
        }
    }

    #[test]
    fn marginal_revenue_is_the_cost_to_go_slope(inst in instance(), capacity in 1usize..=40) {
        let policy = compute_policy(&inst.scheme, &inst.demands, DEFAULT_TOL).unwrap();
        let projections = policy.projections(capacity);
        let thresholds: Vec<Threshold> = projections.iter().map(|&p| Threshold::Level(p)).collect();
        for i in 0..inst.scheme.len() - 1 {
            for level in 0..capacity {
                let here = cost_to_go(i, level, &projections, capacity, &inst.scheme, &inst.demands).unwrap();
                let above = cost_to_go(i, level + 1, &projections, capacity, &inst.scheme, &inst.demands).unwrap();
                let mr = marginal_revenue(i, level, &thresholds, &inst.demands, &inst.scheme).unwrap();
                prop_assert!((here - above - STEP * mr).abs() <= 1e-9, "period {i} level {level}");
            }
        }
    }

    #[test]
    fn capacity_marginal_revenue_is_the_cost_slope(inst in instance()) {
        let policy = compute_policy(&inst.scheme, &inst.demands, DEFAULT_TOL).unwrap();
        let mut cost = expected_cost(&policy, 0, &inst.scheme, &inst.demands).unwrap();
        let ceiling = pi_max(&inst.scheme).cents();
        for capacity in 0..40 {
            let next = expected_cost(&policy, capacity + 1, &inst.scheme, &inst.demands).unwrap();
            let mr = capacity_marginal_revenue(capacity, &policy, &inst.scheme, &inst.demands).unwrap();
            prop_assert!((cost - next - STEP * mr).abs() <= 1e-9, "C={capacity}: {} vs {}", cost - next, STEP * mr);
            prop_assert!(mr <= ceiling + 1e-9 && mr >= -1e-9);
            cost = next;
        }
    }
}
