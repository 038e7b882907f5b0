// SPDX-License-Identifier: Apache-2.0

//! Projection onto generalized Minkowski sets.
//!
//! A model `m` is split as `m = u + v` where each component satisfies its own
//! intersection of constraints and the sum satisfies a third. [`admm_project`]
//! computes the Euclidean projection onto such a set; [`spg_minimize`] uses it
//! inside a spectral projected gradient loop, and [`project_with_datafit`] adds a
//! data-fit constraint for cheap linear forward operators.

pub mod admm;
pub mod cg;
pub mod error;
pub mod grid;
pub mod inverse;
pub mod io;
pub mod linops;
pub mod prox;
pub mod reference;
pub mod spec;
pub mod spg;
pub mod synthetic;
pub mod vecops;

pub use nalgebra;
pub use admm::{admm_project, AdmmOptions, AdmmSolver, ProjectionOutput, SolveReport};
pub use error::{Error, Result, Violation};
pub use grid::{ModelGrid, ModelVector, StackedVector};
pub use linops::{BlockSystem, LinearOperatorSpec, SparseMatrix};
pub use prox::{Bound, ElementarySet};
pub use inverse::{project_with_datafit, video_decompose, DataFit, DataFitConstraint, VideoOptions};
pub use spec::{is_member, sample_element, validate, GeneralizedMinkowskiSpec, SetDescriptor, Target};
pub use spg::{gradient_check, spg_minimize, ObjectiveOracle, SpgOptions, SpgResult, SpgStatus};
