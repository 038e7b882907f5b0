// SPDX-License-Identifier: Apache-2.0

//! Gridded model containers.
//!
//! All vectors in this crate use the same layout: the first axis varies
//! fastest. For a 2D `(n_z, n_x)` grid that is column-major order over the
//! printed `n_z × n_x` matrix, so `(D_z ⊗ I_x)`-style operators act on
//! contiguous runs. For 3D video tensors `(n_x, n_y, n_t)` time is the slowest
//! axis and every frame is a contiguous block of `n_x · n_y` entries.

use nalgebra::DMatrix;
use ndarray::{ArrayD, IxDyn, ShapeBuilder};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelGrid {
    dims: Vec<usize>,
    labels: Vec<String>,
}

impl ModelGrid {
    /// Grid with default axis labels (`z, x` in 2D, `x, y, t` in 3D).
    pub fn new(dims: &[usize]) -> Result<Self> {
        let labels: Vec<&str> = match dims.len() {
            2 => vec!["z", "x"],
            3 => vec!["x", "y", "t"],
            n => {
                return Err(Error::InvalidGrid(format!(
                    "expected 2 or 3 dimensions, got {n}"
                )))
            }
        };
        Self::with_labels(dims, &labels)
    }

    pub fn with_labels<S: AsRef<str>>(dims: &[usize], labels: &[S]) -> Result<Self> {
        if !(2..=3).contains(&dims.len()) {
            return Err(Error::InvalidGrid(format!(
                "expected 2 or 3 dimensions, got {}",
                dims.len()
            )));
        }
        if labels.len() != dims.len() {
            return Err(Error::InvalidGrid(format!(
                "{} labels for {} axes",
                labels.len(),
                dims.len()
            )));
        }
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidGrid(format!("extent of axis {pos} is zero")));
        }
        let labels: Vec<String> = labels.iter().map(|s| s.as_ref().to_owned()).collect();
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::InvalidGrid(format!("duplicate axis label '{l}'")));
            }
        }
        Ok(ModelGrid {
            dims: dims.to_vec(),
            labels,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    /// Total number of cells.
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Distance in the flat vector between neighbours along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.dims[..axis].iter().product()
    }

    pub fn axis_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Flat index of a multi-index.
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        idx.iter()
            .enumerate()
            .map(|(axis, &i)| i * self.stride(axis))
            .sum()
    }

    /// Number of cells in one slice along the last axis.
    pub fn slice_len(&self) -> usize {
        self.dims[..self.dims.len() - 1].iter().product()
    }

    pub fn n_slices(&self) -> usize {
        *self.dims.last().unwrap()
    }
}

/// Values on a grid. Always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelVector {
    grid: ModelGrid,
    data: Vec<f64>,
}

impl ModelVector {
    pub fn new(grid: ModelGrid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                context: "model vector",
                expected: grid.len(),
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(ModelVector { grid, data })
    }

    pub fn zeros(grid: ModelGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: ModelGrid, value: f64) -> Self {
        let data = vec![value; grid.len()];
        ModelVector { grid, data }
    }

    pub fn grid(&self) -> &ModelGrid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn norm(&self) -> f64 {
        crate::vecops::norm(&self.data)
    }
}

/// Flatten an array whose shape equals `grid.dims()`.
pub fn vectorize(grid: &ModelGrid, array: &ArrayD<f64>) -> Result<ModelVector> {
    if array.shape() != grid.dims() {
        return Err(Error::ShapeMismatch {
            expected: grid.dims().to_vec(),
            got: array.shape().to_vec(),
        });
    }
    // Row-major iteration of the reversed-axes view is first-axis-fastest order.
    let data: Vec<f64> = array.t().iter().copied().collect();
    ModelVector::new(grid.clone(), data)
}

pub fn devectorize(m: &ModelVector) -> ArrayD<f64> {
    ArrayD::from_shape_vec(IxDyn(m.grid.dims()).f(), m.data.clone())
        .expect("grid length matches data length")
}

/// The `n_z × n_x` matrix view of a 2D model.
pub fn matricize_2d(m: &ModelVector) -> Result<DMatrix<f64>> {
    if m.grid.ndim() != 2 {
        return Err(Error::InvalidGrid(format!(
            "matricize needs a 2D grid, got {:?}",
            m.grid.dims()
        )));
    }
    let (nz, nx) = (m.grid.dims()[0], m.grid.dims()[1]);
    Ok(DMatrix::from_column_slice(nz, nx, &m.data))
}

pub fn dematricize_2d(grid: &ModelGrid, mat: &DMatrix<f64>) -> Result<ModelVector> {
    if grid.ndim() != 2 {
        return Err(Error::InvalidGrid(format!(
            "dematricize needs a 2D grid, got {:?}",
            grid.dims()
        )));
    }
    let got = vec![mat.nrows(), mat.ncols()];
    if got != grid.dims() {
        return Err(Error::ShapeMismatch {
            expected: grid.dims().to_vec(),
            got,
        });
    }
    ModelVector::new(grid.clone(), mat.as_slice().to_vec())
}

/// The stacked optimization variable `x = (u; v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedVector {
    u: ModelVector,
    v: ModelVector,
}

impl StackedVector {
    pub fn join(u: ModelVector, v: ModelVector) -> Result<Self> {
        if u.grid != v.grid {
            return Err(Error::GridMismatch(
                u.grid.dims().to_vec(),
                v.grid.dims().to_vec(),
            ));
        }
        Ok(StackedVector { u, v })
    }

    /// Build from a flat `2N` buffer laid out as `[u; v]`.
    pub fn from_flat(grid: &ModelGrid, x: &[f64]) -> Result<Self> {
        let n = grid.len();
        if x.len() != 2 * n {
            return Err(Error::DimensionMismatch {
                context: "stacked vector",
                expected: 2 * n,
                got: x.len(),
            });
        }
        Ok(StackedVector {
            u: ModelVector::new(grid.clone(), x[..n].to_vec())?,
            v: ModelVector::new(grid.clone(), x[n..].to_vec())?,
        })
    }

    pub fn split(self) -> (ModelVector, ModelVector) {
        (self.u, self.v)
    }

    pub fn u(&self) -> &ModelVector {
        &self.u
    }

    pub fn v(&self) -> &ModelVector {
        &self.v
    }

    pub fn grid(&self) -> &ModelGrid {
        &self.u.grid
    }

    pub fn len(&self) -> usize {
        2 * self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// `u + v`, i.e. `(I I) x`.
    pub fn sum(&self) -> ModelVector {
        let data = self
            .u
            .data
            .iter()
            .zip(&self.v.data)
            .map(|(a, b)| a + b)
            .collect();
        ModelVector {
            grid: self.u.grid.clone(),
            data,
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.len());
        x.extend_from_slice(&self.u.data);
        x.extend_from_slice(&self.v.data);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Dimension};
    use proptest::prelude::*;

    #[test]
    fn vectorize_first_axis_fastest() {
        let g = ModelGrid::new(&[2, 2]).unwrap();
        let a = array![[1.0, 2.0], [3.0, 4.0]].into_dyn();
        let m = vectorize(&g, &a).unwrap();
        assert_eq!(m.data(), &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(devectorize(&m), a);
    }

    #[test]
    fn vectorize_single_cell() {
        let g = ModelGrid::new(&[1, 1]).unwrap();
        let m = vectorize(&g, &array![[7.0]].into_dyn()).unwrap();
        assert_eq!(m.data(), &[7.0]);
    }

    #[test]
    fn vectorize_shape_mismatch() {
        let g = ModelGrid::new(&[2, 3]).unwrap();
        let err = vectorize(&g, &array![[1.0, 2.0], [3.0, 4.0]].into_dyn()).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn matricize_inverts_vectorize() {
        let g = ModelGrid::new(&[2, 2]).unwrap();
        let m = ModelVector::new(g.clone(), vec![1.0, 3.0, 2.0, 4.0]).unwrap();
        let mat = matricize_2d(&m).unwrap();
        assert_eq!(mat, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(dematricize_2d(&g, &mat).unwrap(), m);

        let z = matricize_2d(&ModelVector::zeros(g)).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matricize_rejects_3d() {
        let g = ModelGrid::new(&[2, 2, 2]).unwrap();
        assert!(matricize_2d(&ModelVector::zeros(g)).is_err());
    }

    #[test]
    fn grid_invariants() {
        assert!(ModelGrid::new(&[3]).is_err());
        assert!(ModelGrid::new(&[2, 2, 2, 2]).is_err());
        assert!(ModelGrid::new(&[2, 0]).is_err());
        let g = ModelGrid::new(&[4, 5, 6]).unwrap();
        assert_eq!(g.len(), 120);
        assert_eq!(g.stride(0), 1);
        assert_eq!(g.stride(1), 4);
        assert_eq!(g.stride(2), 20);
        assert_eq!(g.slice_len(), 20);
        assert_eq!(g.flat_index(&[1, 2, 3]), 1 + 8 + 60);
    }

    #[test]
    fn model_vector_rejects_nan() {
        let g = ModelGrid::new(&[1, 2]).unwrap();
        assert!(matches!(
            ModelVector::new(g, vec![1.0, f64::NAN]),
            Err(Error::NonFinite(1))
        ));
    }

    #[test]
    fn join_split_and_sum() {
        let g = ModelGrid::new(&[1, 2]).unwrap();
        let u = ModelVector::new(g.clone(), vec![1.0, 2.0]).unwrap();
        let v = ModelVector::new(g.clone(), vec![3.0, 4.0]).unwrap();
        let x = StackedVector::join(u.clone(), v.clone()).unwrap();
        assert_eq!(x.sum().data(), &[4.0, 6.0]);
        assert_eq!(StackedVector::from_flat(&g, &x.to_flat()).unwrap(), x);
        let (u2, v2) = x.split();
        assert_eq!((u2, v2), (u, v));

        let other = ModelVector::zeros(ModelGrid::new(&[2, 1]).unwrap());
        assert!(StackedVector::join(other, ModelVector::zeros(g)).is_err());
    }

    proptest! {
        #[test]
        fn vectorize_round_trips(nz in 1usize..6, nx in 1usize..6, nt in 1usize..4,
                                 seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for dims in [vec![nz, nx], vec![nz, nx, nt]] {
                let g = ModelGrid::new(&dims).unwrap();
                let a = ArrayD::from_shape_fn(IxDyn(&dims), |_| rng.random::<f64>());
                let m = vectorize(&g, &a).unwrap();
                prop_assert_eq!(devectorize(&m), a.clone());
                // flat_index agrees with the layout
                for (idx, &val) in a.indexed_iter() {
                    prop_assert_eq!(m.data()[g.flat_index(idx.slice())], val);
                }
                if dims.len() == 2 {
                    let mat = matricize_2d(&m).unwrap();
                    prop_assert_eq!(dematricize_2d(&g, &mat).unwrap(), m);
                }
            }
        }
    }
}
