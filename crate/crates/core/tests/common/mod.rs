#![allow(dead_code)]

use proptest::prelude::*;
use tou_core::{DiscreteDemand, Rate, TouScheme};

pub const STEP: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct Instance {
    pub scheme: TouScheme,
    pub demands: Vec<DiscreteDemand>,
}

fn rates(n: usize) -> impl Strategy<Value = Vec<i64>> {
    (prop::collection::vec(2i64..=30, n - 1), 1i64..=30).prop_filter_map("adjacent rates must differ", |(head, last)| {
        let min = *head.iter().min().unwrap();
        let mut rates = head;
        rates.push(last.min(min));
        rates.windows(2).all(|w| w[0] != w[1]).then_some(rates)
    })
}

/// Demand on at most six consecutive cells within `0..=8`.
pub fn demand() -> impl Strategy<Value = DiscreteDemand> {
    (0usize..=2, prop::collection::vec(1u32..=20, 1..=6)).prop_map(|(offset, weights)| {
        let total: u32 = weights.iter().sum();
        let mut masses = vec![0.0; offset];
        masses.extend(weights.iter().map(|&w| w as f64 / total as f64));
        DiscreteDemand::from_masses(STEP, masses).unwrap()
    })
}

pub fn instance() -> impl Strategy<Value = Instance> {
    (2usize..=5)
        .prop_flat_map(|n| (rates(n), prop::collection::vec(demand(), n)))
        .prop_map(|(rates, demands)| {
            let rates: Vec<Rate> = rates.into_iter().map(|r| Rate::from_hundredths(r * 100)).collect();
            Instance { scheme: TouScheme::from_rates(&rates).unwrap(), demands }
        })
}
