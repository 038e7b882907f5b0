// SPDX-License-Identifier: Apache-2.0

//! Sparse operators, the stacked block operator and the x-update matrix.

mod block;
mod ops;
mod sparse;

pub use block::{BlockKind, BlockRow, BlockSystem};
pub use ops::{build_derivative, LinearOperatorSpec};
pub use sparse::{DiagonalView, SparseMatrix};
