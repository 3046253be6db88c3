#![allow(dead_code)]

use dualtree::{Dataset, TreeConfig};
use proptest::prelude::*;

/// Coordinates mixing a coarse grid (ties and duplicates) with free values.
fn coordinate() -> impl Strategy<Value = f64> {
    prop_oneof![(0i32..8).prop_map(|v| f64::from(v) * 0.125), -1.0..1.0f64]
}

/// A dataset of `1..=max_points` points in 1 to 4 dimensions.
pub fn dataset(max_points: usize) -> impl Strategy<Value = Dataset> {
    (1usize..=4).prop_flat_map(move |dim| {
        prop::collection::vec(prop::collection::vec(coordinate(), dim), 1..=max_points)
            .prop_map(|rows| Dataset::from_rows(&rows).unwrap())
    })
}

/// Two datasets sharing a dimension.
pub fn dataset_pair(max_points: usize) -> impl Strategy<Value = (Dataset, Dataset)> {
    (1usize..=4).prop_flat_map(move |dim| {
        let rows = move || prop::collection::vec(prop::collection::vec(coordinate(), dim), 1..=max_points);
        (rows(), rows()).prop_map(|(q, r)| (Dataset::from_rows(&q).unwrap(), Dataset::from_rows(&r).unwrap()))
    })
}

pub fn tree_config() -> impl Strategy<Value = TreeConfig> {
    prop_oneof![(1usize..6).prop_map(TreeConfig::kd), Just(TreeConfig::cover())]
}

pub fn tree_configs() -> Vec<TreeConfig> {
    vec![TreeConfig::kd(1), TreeConfig::kd(4), TreeConfig::cover()]
}
