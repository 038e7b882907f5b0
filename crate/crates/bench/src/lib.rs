// SPDX-License-Identifier: Apache-2.0

//! Shared fixtures for the benchmarks.

use minkproj_core::synthetic::random_model;
use minkproj_core::{
    validate, ElementarySet, GeneralizedMinkowskiSpec, LinearOperatorSpec, ModelGrid, ModelVector, SetDescriptor,
    Target,
};

/// Bounds on both components, a TV ball on `u`, a cardinality budget on `v`
/// and bounds on the sum, over an `nz × nx` grid.
pub fn blocky_spec(nz: usize, nx: usize) -> GeneralizedMinkowskiSpec {
    let grid = ModelGrid::new(&[nz, nx]).expect("valid grid");
    let bounds = |lo: f64, hi: f64| ElementarySet::Box { lower: lo.into(), upper: hi.into() };
    let id = LinearOperatorSpec::Identity;
    validate(
        &grid,
        vec![
            SetDescriptor::new("D1", Target::U, id.clone(), bounds(2350.0, 2550.0)),
            SetDescriptor::new(
                "D2",
                Target::U,
                LinearOperatorSpec::Gradient { axes: vec![0, 1] },
                ElementarySet::L1Ball { radius: 2000.0 },
            ),
            SetDescriptor::new("E1", Target::V, id.clone(), bounds(-150.0, 0.0)),
            SetDescriptor::new("E2", Target::V, id.clone(), ElementarySet::Cardinality { k: nz * nx / 8, slice_len: None }),
            SetDescriptor::new("F1", Target::Sum, id, bounds(2200.0, 2550.0)),
        ],
    )
    .expect("valid spec")
}

pub fn noisy_model(grid: &ModelGrid, seed: u64) -> ModelVector {
    random_model(grid.clone(), 2400.0, 150.0, seed).expect("valid model")
}
