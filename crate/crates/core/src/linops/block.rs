// SPDX-License-Identifier: Apache-2.0

use crate::error::{Error, Result};
use crate::spec::{GeneralizedMinkowskiSpec, Target};

use super::SparseMatrix;

/// Which columns of `x = (u; v)` a block row touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// `(A 0)`: constraint on `u`.
    U,
    /// `(0 B)`: constraint on `v`.
    V,
    /// `(C C)`: constraint on `u + v`.
    Sum,
    /// `(I I)`: the last row, tied to the distance term.
    Proximity,
}

impl From<Target> for BlockKind {
    fn from(t: Target) -> Self {
        match t {
            Target::U => BlockKind::U,
            Target::V => BlockKind::V,
            Target::Sum => BlockKind::Sum,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlockRow {
    pub kind: BlockKind,
    pub label: String,
    /// The non-zero block (`A_i`, `B_j`, `C_k` or `I`), `M_i × N`.
    pub op: SparseMatrix,
    /// Precomputed `opᵀ op`.
    pub gram: SparseMatrix,
}

/// The stacked operator `Ã` split into block rows, D-rows first, then E, F
/// and finally `(I I)`.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    n: usize,
    rows: Vec<BlockRow>,
    max_diagonals: usize,
}

impl BlockSystem {
    pub fn assemble(spec: &GeneralizedMinkowskiSpec) -> Result<Self> {
        let grid = spec.grid();
        let n = grid.len();
        let mut rows = Vec::with_capacity(spec.s());
        for d in spec.descriptors() {
            let op = d.transform.build(grid)?;
            let gram = op.gram();
            rows.push(BlockRow {
                kind: d.target.into(),
                label: d.label.clone(),
                op,
                gram,
            });
        }
        rows.push(BlockRow {
            kind: BlockKind::Proximity,
            label: "distance".into(),
            op: SparseMatrix::identity(n),
            gram: SparseMatrix::identity(n),
        });
        Ok(BlockSystem {
            n,
            rows,
            max_diagonals: 2 * grid.stride(grid.ndim() - 1) + 1,
        })
    }

    /// Cells per component.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of block rows, `p + q + r + 1`.
    pub fn s(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[BlockRow] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &BlockRow {
        &self.rows[i]
    }

    pub fn row_len(&self, i: usize) -> usize {
        self.rows[i].op.rows()
    }

    /// `A_i x` for a flat `x = [u; v]`.
    pub fn apply_row(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.row_len(i)];
        self.apply_row_into(i, x, &mut out);
        out
    }

    pub fn apply_row_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), 2 * self.n);
        let (u, v) = x.split_at(self.n);
        let row = &self.rows[i];
        match row.kind {
            BlockKind::U => row.op.matvec_into(u, out),
            BlockKind::V => row.op.matvec_into(v, out),
            BlockKind::Sum | BlockKind::Proximity => {
                let w: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + b).collect();
                row.op.matvec_into(&w, out)
            }
        }
    }

    /// `out += A_iᵀ y` with `out` a flat `2N` vector.
    pub fn apply_row_transpose_add(&self, i: usize, y: &[f64], out: &mut [f64]) {
        assert_eq!(out.len(), 2 * self.n);
        let row = &self.rows[i];
        let (ou, ov) = out.split_at_mut(self.n);
        match row.kind {
            BlockKind::U => row.op.rmatvec_add(y, ou),
            BlockKind::V => row.op.rmatvec_add(y, ov),
            BlockKind::Sum | BlockKind::Proximity => {
                let mut t = vec![0.0; self.n];
                row.op.rmatvec_add(y, &mut t);
                for k in 0..self.n {
                    ou[k] += t[k];
                    ov[k] += t[k];
                }
            }
        }
    }

    /// `Ã x` as one vector per block row.
    pub fn apply(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (0..self.s()).map(|i| self.apply_row(i, x)).collect()
    }

    /// `Ãᵀ ỹ`, summed in row order.
    pub fn apply_transpose(&self, ys: &[Vec<f64>]) -> Vec<f64> {
        assert_eq!(ys.len(), self.s());
        let mut out = vec![0.0; 2 * self.n];
        for (i, y) in ys.iter().enumerate() {
            self.apply_row_transpose_add(i, y, &mut out);
        }
        out
    }

    /// `Q = Σ ρ_i A_iᵀ A_i` as a `2N × 2N` matrix, built from the cached Gram
    /// blocks. A compressed-diagonal view is attached when Q is banded enough.
    pub fn assemble_q(&self, rho: &[f64]) -> Result<SparseMatrix> {
        if rho.len() != self.s() {
            return Err(Error::DimensionMismatch {
                context: "penalty parameters",
                expected: self.s(),
                got: rho.len(),
            });
        }
        if let Some(i) = rho.iter().position(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "penalty for row '{}' must be positive, got {}",
                self.rows[i].label, rho[i]
            )));
        }
        let n = self.n;
        let mut t = Vec::new();
        for (row, &r) in self.rows.iter().zip(rho) {
            for (a, b, g) in row.gram.triplets() {
                let v = r * g;
                match row.kind {
                    BlockKind::U => t.push((a, b, v)),
                    BlockKind::V => t.push((a + n, b + n, v)),
                    BlockKind::Sum | BlockKind::Proximity => {
                        t.push((a, b, v));
                        t.push((a, b + n, v));
                        t.push((a + n, b, v));
                        t.push((a + n, b + n, v));
                    }
                }
            }
        }
        let mut q = SparseMatrix::from_triplets(2 * n, 2 * n, &t)?;
        q.attach_diagonal_view(self.max_diagonals);
        Ok(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ModelGrid;
    use crate::linops::LinearOperatorSpec;
    use crate::prox::ElementarySet;
    use crate::spec::{validate, SetDescriptor};
    use nalgebra::{DMatrix, SymmetricEigen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_box(label: &str, t: Target, op: LinearOperatorSpec) -> SetDescriptor {
        SetDescriptor::new(label, t, op, ElementarySet::Box { lower: 0.0.into(), upper: 1.0.into() })
    }

    fn mixed_spec(grid: &ModelGrid) -> GeneralizedMinkowskiSpec {
        validate(
            grid,
            vec![
                unit_box("d", Target::U, LinearOperatorSpec::Identity),
                unit_box("dz", Target::U, LinearOperatorSpec::Derivative { axis: 0 }),
                unit_box("e", Target::V, LinearOperatorSpec::Identity),
                unit_box("ex", Target::V, LinearOperatorSpec::Derivative { axis: 1 }),
                SetDescriptor::new(
                    "tv",
                    Target::Sum,
                    LinearOperatorSpec::Gradient { axes: vec![0, 1] },
                    ElementarySet::L1Ball { radius: 3.0 },
                ),
            ],
        )
        .unwrap()
    }

    #[test]
    fn identity_pair_gives_expected_q() {
        let g = ModelGrid::new(&[2, 2]).unwrap();
        let spec = validate(
            &g,
            vec![
                unit_box("d", Target::U, LinearOperatorSpec::Identity),
                unit_box("e", Target::V, LinearOperatorSpec::Identity),
            ],
        )
        .unwrap();
        let bs = BlockSystem::assemble(&spec).unwrap();
        assert_eq!(bs.s(), 3);
        let kinds: Vec<_> = bs.rows().iter().map(|r| r.kind).collect();
        assert_eq!(kinds, [BlockKind::U, BlockKind::V, BlockKind::Proximity]);
        let q = bs.assemble_q(&[1.0; 3]).unwrap().to_dense();
        let i4 = DMatrix::<f64>::identity(4, 4);
        let mut expected = DMatrix::zeros(8, 8);
        expected.view_mut((0, 0), (4, 4)).copy_from(&(&i4 * 2.0));
        expected.view_mut((4, 4), (4, 4)).copy_from(&(&i4 * 2.0));
        expected.view_mut((0, 4), (4, 4)).copy_from(&i4);
        expected.view_mut((4, 0), (4, 4)).copy_from(&i4);
        assert_eq!(q, expected);
    }

    #[test]
    fn rejects_nonpositive_rho() {
        let g = ModelGrid::new(&[3, 3]).unwrap();
        let bs = BlockSystem::assemble(&mixed_spec(&g)).unwrap();
        let mut rho = vec![1.0; bs.s()];
        rho[2] = 0.0;
        assert!(bs.assemble_q(&rho).is_err());
        assert!(bs.assemble_q(&[1.0]).is_err());
    }

    #[test]
    fn rows_match_independent_products() {
        let g = ModelGrid::new(&[4, 5]).unwrap();
        let spec = mixed_spec(&g);
        let bs = BlockSystem::assemble(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (u, v) = x.split_at(20);
        let w: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + b).collect();
        let ys = bs.apply(&x);
        for (d, y) in spec.descriptors().zip(&ys) {
            let arg = match d.target {
                Target::U => u,
                Target::V => v,
                Target::Sum => &w[..],
            };
            let direct = d.transform.build(&g).unwrap().matvec(arg).unwrap();
            assert_eq!(&direct, y);
        }
        assert_eq!(ys.last().unwrap(), &w);
    }

    #[test]
    fn q_matches_rowwise_gram_oracle_and_is_pd() {
        let g = ModelGrid::new(&[4, 5]).unwrap();
        let bs = BlockSystem::assemble(&mixed_spec(&g)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rho: Vec<f64> = (0..bs.s()).map(|_| rng.random_range(0.1..5.0)).collect();
        let q = bs.assemble_q(&rho).unwrap();
        assert!(q.is_symmetric());
        for _ in 0..5 {
            let x: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
            let qx = q.matvec(&x).unwrap();
            let mut oracle = vec![0.0; 40];
            for (i, &rho_i) in rho.iter().enumerate() {
                let y: Vec<f64> = bs.apply_row(i, &x).iter().map(|v| rho_i * v).collect();
                bs.apply_row_transpose_add(i, &y, &mut oracle);
            }
            let scale = oracle.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for (a, b) in qx.iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-12 * scale, "{a} vs {b}");
            }
        }
        let eig = SymmetricEigen::new(q.to_dense());
        assert!(eig.eigenvalues.min() > 0.0);
    }

    #[test]
    fn transpose_is_adjoint_of_apply() {
        let g = ModelGrid::new(&[3, 4]).unwrap();
        let bs = BlockSystem::assemble(&mixed_spec(&g)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..24).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ys: Vec<Vec<f64>> = (0..bs.s())
            .map(|i| (0..bs.row_len(i)).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let ax = bs.apply(&x);
        let lhs: f64 = ax.iter().zip(&ys).map(|(a, y)| crate::vecops::dot(a, y)).sum();
        let rhs = crate::vecops::dot(&x, &bs.apply_transpose(&ys));
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }
}
