// SPDX-License-Identifier: Apache-2.0

use crate::error::{Error, Result};
use crate::grid::ModelGrid;

use super::SparseMatrix;

/// Transform-domain operator attached to a constraint.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearOperatorSpec {
    Identity,
    /// Forward first difference along one axis, no wrap-around.
    Derivative { axis: usize },
    /// Vertically stacked forward differences along each listed axis,
    /// the operator behind anisotropic total variation.
    Gradient { axes: Vec<usize> },
    /// Any explicit matrix with `N` columns (masks, blurs, ...).
    Custom(SparseMatrix),
}

impl LinearOperatorSpec {
    pub fn is_identity(&self) -> bool {
        matches!(self, LinearOperatorSpec::Identity)
    }

    /// Number of rows when applied on `grid`.
    pub fn rows(&self, grid: &ModelGrid) -> Result<usize> {
        Ok(match self {
            LinearOperatorSpec::Identity => grid.len(),
            LinearOperatorSpec::Derivative { axis } => derivative_rows(grid, *axis)?,
            LinearOperatorSpec::Gradient { axes } => {
                let mut n = 0;
                for &a in axes {
                    n += derivative_rows(grid, a)?;
                }
                n
            }
            LinearOperatorSpec::Custom(m) => m.rows(),
        })
    }

    /// Grid shape of the output, when the output is itself a grid.
    pub fn output_dims(&self, grid: &ModelGrid) -> Option<Vec<usize>> {
        match self {
            LinearOperatorSpec::Identity => Some(grid.dims().to_vec()),
            LinearOperatorSpec::Derivative { axis } if *axis < grid.ndim() => {
                let mut d = grid.dims().to_vec();
                d[*axis] = d[*axis].saturating_sub(1);
                Some(d)
            }
            _ => None,
        }
    }

    pub fn build(&self, grid: &ModelGrid) -> Result<SparseMatrix> {
        match self {
            LinearOperatorSpec::Identity => Ok(SparseMatrix::identity(grid.len())),
            LinearOperatorSpec::Derivative { axis } => build_derivative(grid, *axis),
            LinearOperatorSpec::Gradient { axes } => {
                if axes.is_empty() {
                    return Err(Error::InvalidParameter(
                        "gradient operator needs at least one axis".into(),
                    ));
                }
                let mut t = Vec::new();
                let mut offset = 0;
                for &a in axes {
                    let d = build_derivative(grid, a)?;
                    t.extend(d.triplets().into_iter().map(|(r, c, v)| (r + offset, c, v)));
                    offset += d.rows();
                }
                SparseMatrix::from_triplets(offset, grid.len(), &t)
            }
            LinearOperatorSpec::Custom(m) => {
                if m.cols() != grid.len() {
                    return Err(Error::DimensionMismatch {
                        context: "custom operator columns",
                        expected: grid.len(),
                        got: m.cols(),
                    });
                }
                Ok(m.clone())
            }
        }
    }
}

fn derivative_rows(grid: &ModelGrid, axis: usize) -> Result<usize> {
    check_axis(grid, axis)?;
    Ok(grid.len() / grid.dims()[axis] * (grid.dims()[axis] - 1))
}

fn check_axis(grid: &ModelGrid, axis: usize) -> Result<()> {
    if axis >= grid.ndim() {
        return Err(Error::InvalidParameter(format!(
            "axis {axis} out of range for a {}D grid",
            grid.ndim()
        )));
    }
    if grid.dims()[axis] < 2 {
        return Err(Error::InvalidParameter(format!(
            "derivative along axis '{}' needs extent >= 2, got {}",
            grid.labels()[axis],
            grid.dims()[axis]
        )));
    }
    Ok(())
}

/// Forward difference `(Dm)[k] = m[k + e_axis] - m[k]`.
///
/// The output lives on the grid with `dims[axis] - 1` and uses the same
/// first-axis-fastest layout.
pub fn build_derivative(grid: &ModelGrid, axis: usize) -> Result<SparseMatrix> {
    check_axis(grid, axis)?;
    let dims = grid.dims();
    let mut out_dims = dims.to_vec();
    out_dims[axis] -= 1;
    let out_grid_len: usize = out_dims.iter().product();
    let in_stride = grid.stride(axis);

    let mut t = Vec::with_capacity(2 * out_grid_len);
    let mut idx = vec![0usize; dims.len()];
    for row in 0..out_grid_len {
        // idx is the multi-index of `row` on the output grid
        let col = grid.flat_index(&idx);
        t.push((row, col, -1.0));
        t.push((row, col + in_stride, 1.0));
        for (a, i) in idx.iter_mut().enumerate() {
            *i += 1;
            if *i < out_dims[a] {
                break;
            }
            *i = 0;
        }
    }
    SparseMatrix::from_triplets(out_grid_len, grid.len(), &t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_diff(n: usize) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(n - 1, n);
        for i in 0..n - 1 {
            d[(i, i)] = -1.0;
            d[(i, i + 1)] = 1.0;
        }
        d
    }

    /// Explicit Kronecker construction; axis 0 is the innermost factor.
    fn dense_kron_derivative(dims: &[usize], axis: usize) -> DMatrix<f64> {
        let mut acc = DMatrix::<f64>::identity(1, 1);
        for (a, &n) in dims.iter().enumerate() {
            let factor = if a == axis {
                dense_diff(n)
            } else {
                DMatrix::identity(n, n)
            };
            acc = factor.kronecker(&acc);
        }
        acc
    }

    #[test]
    fn first_difference_on_column() {
        let g = ModelGrid::new(&[3, 1]).unwrap();
        let d = build_derivative(&g, 0).unwrap();
        assert_eq!(d.matvec(&[1.0, 4.0, 9.0]).unwrap(), vec![3.0, 5.0]);
    }

    #[test]
    fn constant_model_is_annihilated() {
        let g = ModelGrid::new(&[4, 3, 2]).unwrap();
        for axis in 0..3 {
            let d = build_derivative(&g, axis).unwrap();
            assert!(d.matvec(&vec![2.5; g.len()]).unwrap().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn row_count_and_errors() {
        let g = ModelGrid::new(&[4, 5]).unwrap();
        assert_eq!(build_derivative(&g, 0).unwrap().rows(), 15);
        assert_eq!(build_derivative(&g, 1).unwrap().rows(), 16);
        assert_eq!(LinearOperatorSpec::Gradient { axes: vec![0, 1] }.rows(&g).unwrap(), 31);
        let flat = ModelGrid::new(&[4, 1]).unwrap();
        assert!(build_derivative(&flat, 1).is_err());
        assert!(build_derivative(&g, 2).is_err());
    }

    #[test]
    fn matches_dense_kronecker_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dims in [vec![4, 5], vec![6, 7], vec![2, 6], vec![3, 4, 5]] {
            let g = ModelGrid::new(&dims).unwrap();
            for axis in 0..dims.len() {
                let sparse = build_derivative(&g, axis).unwrap();
                let dense = dense_kron_derivative(&dims, axis);
                assert_eq!(sparse.to_dense(), dense);
                let x: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let y = sparse.matvec(&x).unwrap();
                let yd = &dense * nalgebra::DVector::from_column_slice(&x);
                let diff = y.iter().zip(yd.iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                assert!(diff < 1e-14);
            }
        }
    }

    #[test]
    fn custom_operator_column_check() {
        let g = ModelGrid::new(&[2, 2]).unwrap();
        let op = LinearOperatorSpec::Custom(SparseMatrix::identity(3));
        assert!(op.build(&g).is_err());
    }
}
