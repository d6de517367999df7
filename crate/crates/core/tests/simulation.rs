mod common;

use common::instance;
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::TestRunner;
use tou_core::oracle::simulate_policy;
use tou_core::policy::{compute_policy, expected_cost, DEFAULT_TOL};

#[test]
fn monte_carlo_agrees_with_expected_cost() {
    let mut runner = TestRunner::deterministic();
    for k in 0..5 {
        let inst = instance().new_tree(&mut runner).unwrap().current();
        let capacity = 4 + 6 * k;
        let policy = compute_policy(&inst.scheme, &inst.demands, DEFAULT_TOL).unwrap();
        let exact = expected_cost(&policy, capacity, &inst.scheme, &inst.demands).unwrap();
        let report = simulate_policy(&policy, capacity, &inst.scheme, &inst.demands, 50_000, k as u64).unwrap();
        assert!(
            (report.mean_cost - exact).abs() <= report.ci_halfwidth,
            "instance {k}: simulated {} exact {exact} halfwidth {}",
            report.mean_cost,
            report.ci_halfwidth
        );
    }
}

#[test]
fn simulation_ignores_thread_count() {
    let mut runner = TestRunner::deterministic();
    let inst = instance().new_tree(&mut runner).unwrap().current();
    let policy = compute_policy(&inst.scheme, &inst.demands, DEFAULT_TOL).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_policy(&policy, 10, &inst.scheme, &inst.demands, 20_000, 99).unwrap())
    };
    assert_eq!(run(1), run(4));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn same_seed_same_report(inst in instance(), seed in any::<u64>()) {
        let policy = compute_policy(&inst.scheme, &inst.demands, DEFAULT_TOL).unwrap();
        let a = simulate_policy(&policy, 8, &inst.scheme, &inst.demands, 2_000, seed).unwrap();
        let b = simulate_policy(&policy, 8, &inst.scheme, &inst.demands, 2_000, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
