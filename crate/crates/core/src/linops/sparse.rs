// SPDX-License-Identifier: Apache-2.0

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row count above which products are split across the rayon pool.
const PAR_ROWS: usize = 8192;

/// Compressed sparse row matrix.
///
/// Column indices are strictly increasing within each row and no explicit
/// zeros are stored. A compressed-diagonal view can be attached for banded
/// matrices; products then go through the view.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    diagonal: Option<DiagonalView>,
}

/// Diagonal storage: `data[d][i] = A[i, i + offsets[d]]` (zero-padded off the edge).
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalView {
    offsets: Vec<isize>,
    data: Vec<Vec<f64>>,
}

impl DiagonalView {
    pub fn offsets(&self) -> &[isize] {
        &self.offsets
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len() as isize;
        let row = |i: usize| {
            let mut acc = 0.0;
            for (off, d) in self.offsets.iter().zip(&self.data) {
                let j = i as isize + off;
                if j >= 0 && j < n {
                    acc += d[i] * x[j as usize];
                }
            }
            acc
        };
        if out.len() >= PAR_ROWS {
            out.par_iter_mut()
                .enumerate()
                .with_min_len(1024)
                .for_each(|(i, o)| *o = row(i));
        } else {
            for (i, o) in out.iter_mut().enumerate() {
                *o = row(i);
            }
        }
    }
}

impl SparseMatrix {
    /// Build from `(row, col, value)` triplets. Duplicates are summed in input
    /// order and zeros dropped.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        for &(r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::InvalidParameter(format!(
                    "entry ({r}, {c}) outside a {rows}x{cols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "non-finite entry at ({r}, {c})"
                )));
            }
        }
        let mut sorted = triplets.to_vec();
        // stable, so duplicate sums are reproducible
        sorted.sort_by_key(|&(r, c, _)| (r, c));

        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut k = 0;
        while k < sorted.len() {
            let (r, c, mut v) = sorted[k];
            k += 1;
            while k < sorted.len() && sorted[k].0 == r && sorted[k].1 == c {
                v += sorted[k].2;
                k += 1;
            }
            if v != 0.0 {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
            }
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(SparseMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
            diagonal: None,
        })
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
            diagonal: None,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
            diagonal: None,
        }
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let mut t = Vec::new();
        for r in 0..a.nrows() {
            for c in 0..a.ncols() {
                if a[(r, c)] != 0.0 {
                    t.push((r, c, a[(r, c)]));
                }
            }
        }
        Self::from_triplets(a.nrows(), a.ncols(), &t).expect("dense entries in range")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            t.extend(cols.iter().zip(vals).map(|(&c, &v)| (r, c, v)));
        }
        t
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.triplets() {
            d[(r, c)] = v;
        }
        d
    }

    pub fn diagonal_view(&self) -> Option<&DiagonalView> {
        self.diagonal.as_ref()
    }

    /// `A x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                context: "matvec",
                expected: self.cols,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x, &mut out);
        Ok(out)
    }

    /// `A x` into a preallocated buffer. Panics on dimension mismatch.
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "matvec input length");
        assert_eq!(out.len(), self.rows, "matvec output length");
        if let Some(dv) = &self.diagonal {
            dv.apply(x, out);
            return;
        }
        let row = |r: usize| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum::<f64>()
        };
        if self.rows >= PAR_ROWS {
            out.par_iter_mut()
                .enumerate()
                .with_min_len(1024)
                .for_each(|(r, o)| *o = row(r));
        } else {
            for (r, o) in out.iter_mut().enumerate() {
                *o = row(r);
            }
        }
    }

    /// `Aᵀ y`.
    pub fn rmatvec(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(Error::DimensionMismatch {
                context: "rmatvec",
                expected: self.rows,
                got: y.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        self.rmatvec_add(y, &mut out);
        Ok(out)
    }

    /// `out += Aᵀ y`, accumulated row by row in a fixed order.
    pub fn rmatvec_add(&self, y: &[f64], out: &mut [f64]) {
        assert_eq!(y.len(), self.rows, "rmatvec input length");
        assert_eq!(out.len(), self.cols, "rmatvec output length");
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out[c] += v * yr;
            }
        }
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let k = next[c];
                indices[k] = r;
                values[k] = v;
                next[c] += 1;
            }
        }
        SparseMatrix {
            rows: self.cols,
            cols: self.rows,
            indptr,
            indices,
            values,
            diagonal: None,
        }
    }

    /// Sparse product `A B`.
    pub fn matmul(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                context: "matmul",
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut acc = vec![0.0; other.cols];
        let mut seen = vec![usize::MAX; other.cols];
        let mut indptr = vec![0usize; self.rows + 1];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut touched = Vec::new();
        for r in 0..self.rows {
            touched.clear();
            let (acols, avals) = self.row(r);
            for (&k, &a) in acols.iter().zip(avals) {
                let (bcols, bvals) = other.row(k);
                for (&c, &b) in bcols.iter().zip(bvals) {
                    if seen[c] != r {
                        seen[c] = r;
                        acc[c] = 0.0;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                if acc[c] != 0.0 {
                    indices.push(c);
                    values.push(acc[c]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        Ok(SparseMatrix {
            rows: self.rows,
            cols: other.cols,
            indptr,
            indices,
            values,
            diagonal: None,
        })
    }

    /// `AᵀA`.
    pub fn gram(&self) -> SparseMatrix {
        self.transpose()
            .matmul(self)
            .expect("transpose dimensions always agree")
    }

    /// Exact structural symmetry: same pattern and bitwise-equal mirrored values.
    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && self.transpose().without_view() == self.without_view()
    }

    fn without_view(&self) -> SparseMatrix {
        SparseMatrix {
            diagonal: None,
            ..self.clone()
        }
    }

    /// Offsets `c - r` of all diagonals that hold a stored entry, ascending.
    pub fn occupied_diagonals(&self) -> Vec<isize> {
        let mut offs: Vec<isize> = (0..self.rows)
            .flat_map(|r| {
                let (cols, _) = self.row(r);
                cols.iter().map(move |&c| c as isize - r as isize)
            })
            .collect();
        offs.sort_unstable();
        offs.dedup();
        offs
    }

    /// Attach a compressed-diagonal view when the matrix is square and
    /// occupies at most `max_diagonals` diagonals. Returns whether a view was built.
    #[allow(clippy::needless_range_loop)]
    pub fn attach_diagonal_view(&mut self, max_diagonals: usize) -> bool {
        self.diagonal = None;
        if self.rows != self.cols {
            return false;
        }
        let offsets = self.occupied_diagonals();
        if offsets.len() > max_diagonals {
            return false;
        }
        let mut data = vec![vec![0.0; self.rows]; offsets.len()];
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let off = c as isize - r as isize;
                let d = offsets.binary_search(&off).expect("offset collected above");
                data[d][r] = v;
            }
        }
        self.diagonal = Some(DiagonalView { offsets, data });
        true
    }
}
