//! Shared fixtures for the benchmarks.

use rfd_core::constraints::sample_per_class;
use rfd_core::dataset::swiss_roll;
use rfd_core::{ConstraintSet, Dataset, DistanceModel, ForestParams};

/// A noisy swiss roll of `n` points with `per_class` constraints of each
/// kind per class.
pub fn roll_with_constraints(n: usize, per_class: usize) -> (Dataset, ConstraintSet) {
    let data = swiss_roll(n, 1.0, 11).expect("swiss roll");
    let cs = sample_per_class(&data, per_class, per_class, 12).expect("constraints");
    (data, cs)
}

pub fn rfd_model(data: &Dataset, cs: &ConstraintSet, trees: usize, position: bool) -> DistanceModel {
    let params = ForestParams { tree_count: trees, seed: 13, ..Default::default() };
    DistanceModel::train_rfd(cs, data, position, &params).expect("training")
}
