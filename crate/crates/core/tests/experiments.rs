use tou_core::experiments::{aggregation_experiment, cv_cost_gap_experiment, ExperimentConfig};
use tou_core::{DemandDescriptor, DemandSpec, Rate, TouScheme};

fn config() -> ExperimentConfig {
    let rates: Vec<Rate> = ["6.7", "12.4", "10.4", "12.4", "6.7"].iter().map(|r| r.parse().unwrap()).collect();
    let user = DemandSpec::new(
        [3.5, 2.0, 3.0, 1.0, 2.5].iter().map(|&mean| DemandDescriptor::LogNormal { mean, cv: 0.5 }).collect(),
    );
    ExperimentConfig {
        scheme: TouScheme::from_rates(&rates).unwrap(),
        user,
        cv_grid: vec![0.0, 0.2, 0.5, 1.0],
        group_sizes: vec![1, 5, 10, 20, 40],
        days: 0,
        seed: 1,
        pi_s: "2".parse().unwrap(),
        grid_step: 0.05,
        tail_mass: 1e-6,
        tol: 1e-6,
        reoptimize_baseline: true,
    }
}

#[test]
fn cost_gap_grows_with_variability() {
    let rows = cv_cost_gap_experiment(&config()).unwrap();
    assert!(rows[0].cost_gap.abs() < 1e-12);
    for w in rows.windows(2) {
        assert!(w[1].cost_gap >= w[0].cost_gap, "{} then {}", w[0].cost_gap, w[1].cost_gap);
    }
}

#[test]
fn pooling_lowers_per_user_cost_with_diminishing_returns() {
    let rows = aggregation_experiment(&config()).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].per_user_cost <= w[0].per_user_cost);
    }
    let cost = |k: usize| rows.iter().find(|r| r.group_size == k).unwrap().per_user_cost;
    assert!(cost(20) - cost(40) < cost(1) - cost(10));
}

#[test]
fn fixed_baseline_capacity_option() {
    let mut config = config();
    config.reoptimize_baseline = false;
    config.cv_grid = vec![1.0];
    let rows = cv_cost_gap_experiment(&config).unwrap();
    assert_eq!(rows[0].random.c_star, rows[0].baseline.c_star);
    assert!(rows[0].cost_gap > 0.0);
}

#[test]
fn bad_grids_are_rejected() {
    let mut config = config();
    config.cv_grid = vec![0.5, 0.2];
    assert!(cv_cost_gap_experiment(&config).is_err());
    let mut config = self::config();
    config.group_sizes = vec![0, 2];
    assert!(aggregation_experiment(&config).is_err());
}
