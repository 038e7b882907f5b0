// SPDX-License-Identifier: Apache-2.0

//! Closed-form Euclidean projections onto elementary sets.
//!
//! These are the proximal maps of the indicator functions that appear in the
//! y-update of the splitting. Sets that act "per slice" operate on
//! consecutive, equally sized blocks of the input vector; with the crate's
//! vector layout that is one frame of a video tensor.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linops::SparseMatrix;
use crate::vecops::{dist, norm};

/// Scalar or per-entry bound.
#[derive(Debug, Clone, PartialEq)]
pub enum Bound {
    Scalar(f64),
    PerEntry(Vec<f64>),
}

impl Bound {
    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        match self {
            Bound::Scalar(v) => *v,
            Bound::PerEntry(v) => v[i],
        }
    }

    fn len(&self) -> Option<usize> {
        match self {
            Bound::Scalar(_) => None,
            Bound::PerEntry(v) => Some(v.len()),
        }
    }
}

impl From<f64> for Bound {
    fn from(v: f64) -> Self {
        Bound::Scalar(v)
    }
}

impl From<Vec<f64>> for Bound {
    fn from(v: Vec<f64>) -> Self {
        Bound::PerEntry(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ElementarySet {
    /// `lower ≤ y ≤ upper`; infinite bounds are allowed.
    Box { lower: Bound, upper: Bound },
    /// `y = value`.
    Fixed { value: Bound },
    L1Ball { radius: f64 },
    L2Ball { radius: f64 },
    /// `inner ≤ ‖y − center‖₂ ≤ outer`.
    L2Annulus {
        inner: f64,
        outer: f64,
        center: Option<Vec<f64>>,
    },
    /// At most `k` nonzeros, per slice of `slice_len` entries when given.
    Cardinality { k: usize, slice_len: Option<usize> },
    /// Each `rows × cols` slice (column-major) has rank at most `r`.
    Rank { r: usize, rows: usize, cols: usize },
    /// Every slice lies in the column span of `basis` (orthonormal columns).
    Subspace { basis: DMatrix<f64> },
    /// `lower ≤ y − d_obs ≤ upper` entrywise.
    PointwiseDataFit {
        d_obs: Vec<f64>,
        lower: Bound,
        upper: Bound,
    },
}

impl ElementarySet {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ElementarySet::Box { .. } => "box",
            ElementarySet::Fixed { .. } => "fixed",
            ElementarySet::L1Ball { .. } => "l1_ball",
            ElementarySet::L2Ball { .. } => "l2_ball",
            ElementarySet::L2Annulus { .. } => "l2_annulus",
            ElementarySet::Cardinality { .. } => "cardinality",
            ElementarySet::Rank { .. } => "rank",
            ElementarySet::Subspace { .. } => "subspace",
            ElementarySet::PointwiseDataFit { .. } => "pointwise_datafit",
        }
    }

    pub fn is_convex(&self) -> bool {
        match self {
            ElementarySet::L2Annulus { inner, .. } => *inner == 0.0,
            ElementarySet::Cardinality { .. } | ElementarySet::Rank { .. } => false,
            _ => true,
        }
    }

    /// Whether this set pins its argument to a bounded region on every entry,
    /// which is what makes an identity row count towards full column rank.
    pub fn is_bound_like(&self) -> bool {
        matches!(self, ElementarySet::Box { .. } | ElementarySet::Fixed { .. })
    }

    /// Orthonormalize raw training frames (one frame per column) into a
    /// subspace set. Directions with singular value below `rel_tol · σ_max`
    /// are dropped.
    pub fn subspace_from_frames(frames: &DMatrix<f64>, rel_tol: f64) -> Result<Self> {
        if frames.ncols() == 0 || frames.nrows() == 0 {
            return Err(Error::InvalidParameter("no training frames".into()));
        }
        let triplets = singular_triplets(frames, usize::MAX);
        let smax = triplets.first().map_or(0.0, |t| t.0);
        let kept: Vec<DVector<f64>> = triplets
            .into_iter()
            .filter(|t| t.0 > rel_tol * smax)
            .map(|t| t.1)
            .collect();
        let basis = if kept.is_empty() {
            DMatrix::zeros(frames.nrows(), 0)
        } else {
            // Re-orthonormalize; the eigenvector halves are only orthogonal up to rounding.
            DMatrix::from_columns(&kept).qr().q()
        };
        let set = ElementarySet::Subspace { basis };
        set.check_params()?;
        Ok(set)
    }

    /// Parameter invariants that do not depend on the vector length.
    pub fn check_params(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match self {
            ElementarySet::Box { lower, upper } => check_bounds(lower, upper),
            ElementarySet::PointwiseDataFit { lower, upper, d_obs } => {
                if let Some(len) = lower.len().or(upper.len()) {
                    if len != d_obs.len() {
                        return bad(format!(
                            "misfit bounds have length {len}, data has {}",
                            d_obs.len()
                        ));
                    }
                }
                check_bounds(lower, upper)
            }
            ElementarySet::Fixed { value } => match value {
                Bound::Scalar(v) if !v.is_finite() => bad("fixed value must be finite".into()),
                Bound::PerEntry(v) if v.iter().any(|x| !x.is_finite()) => {
                    bad("fixed values must be finite".into())
                }
                _ => Ok(()),
            },
            ElementarySet::L1Ball { radius } | ElementarySet::L2Ball { radius } => {
                if *radius >= 0.0 && radius.is_finite() {
                    Ok(())
                } else {
                    bad(format!("radius must be finite and >= 0, got {radius}"))
                }
            }
            ElementarySet::L2Annulus { inner, outer, .. } => {
                if *inner >= 0.0 && inner < outer && outer.is_finite() {
                    Ok(())
                } else {
                    bad(format!("annulus needs 0 <= inner < outer, got [{inner}, {outer}]"))
                }
            }
            ElementarySet::Cardinality { k, slice_len } => match slice_len {
                Some(0) => bad("cardinality slice length is zero".into()),
                Some(s) if k > s => bad(format!("cardinality {k} exceeds slice length {s}")),
                _ => Ok(()),
            },
            ElementarySet::Rank { r, rows, cols } => {
                if *r >= 1 && r <= rows.min(cols) {
                    Ok(())
                } else {
                    bad(format!("rank {r} outside 1..={} for a {rows}x{cols} matrix", rows.min(cols)))
                }
            }
            ElementarySet::Subspace { basis } => {
                let gram = basis.transpose() * basis;
                let err = (gram - DMatrix::identity(basis.ncols(), basis.ncols())).amax();
                if err <= 1e-10 {
                    Ok(())
                } else {
                    bad(format!("subspace basis is not orthonormal (|UᵀU − I| = {err:e})"))
                }
            }
        }
    }

    /// Check that the set applies to vectors of length `dim`.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        let mismatch = |what: &str, expected: usize| {
            Err(Error::InvalidParameter(format!(
                "{what} has length {expected}, constrained vector has {dim}"
            )))
        };
        let divides = |what: &str, s: usize| {
            if s == 0 || !dim.is_multiple_of(s) {
                Err(Error::InvalidParameter(format!(
                    "{what} of {s} does not divide vector length {dim}"
                )))
            } else {
                Ok(())
            }
        };
        match self {
            ElementarySet::Box { lower, upper } => {
                for b in [lower, upper] {
                    if let Some(l) = b.len() {
                        if l != dim {
                            return mismatch("bound", l);
                        }
                    }
                }
                Ok(())
            }
            ElementarySet::Fixed { value } => match value.len() {
                Some(l) if l != dim => mismatch("fixed value", l),
                _ => Ok(()),
            },
            ElementarySet::L2Annulus {
                center: Some(c), ..
            } if c.len() != dim => mismatch("annulus center", c.len()),
            ElementarySet::PointwiseDataFit { d_obs, .. } if d_obs.len() != dim => {
                mismatch("observed data", d_obs.len())
            }
            ElementarySet::Cardinality {
                slice_len: Some(s),
                ..
            } => divides("cardinality slice length", *s),
            ElementarySet::Cardinality { k, slice_len: None } if *k > dim => Err(
                Error::InvalidParameter(format!("cardinality {k} exceeds vector length {dim}")),
            ),
            ElementarySet::Rank { rows, cols, .. } => divides("rank slice", rows * cols),
            ElementarySet::Subspace { basis } => divides("subspace slice", basis.nrows()),
            _ => Ok(()),
        }
    }

    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        let mut out = y.to_vec();
        self.project_in_place(&mut out);
        out
    }

    pub fn project_in_place(&self, y: &mut [f64]) {
        match self {
            ElementarySet::Box { lower, upper } => clamp_in_place(y, lower, upper),
            ElementarySet::Fixed { value } => {
                for (i, v) in y.iter_mut().enumerate() {
                    *v = value.at(i);
                }
            }
            ElementarySet::L1Ball { radius } => l1_ball_in_place(y, *radius),
            ElementarySet::L2Ball { radius } => annulus_in_place(y, 0.0, *radius, None),
            ElementarySet::L2Annulus {
                inner,
                outer,
                center,
            } => annulus_in_place(y, *inner, *outer, center.as_deref()),
            ElementarySet::Cardinality { k, slice_len } => {
                let s = slice_len.unwrap_or(y.len()).max(1);
                for_each_slice(y, s, |c| cardinality_in_place(c, *k));
            }
            ElementarySet::Rank { r, rows, cols } => {
                for_each_slice(y, rows * cols, |c| rank_in_place(c, *r, *rows, *cols));
            }
            ElementarySet::Subspace { basis } => {
                for_each_slice(y, basis.nrows(), |c| subspace_in_place(c, basis));
            }
            ElementarySet::PointwiseDataFit {
                d_obs,
                lower,
                upper,
            } => {
                for (i, v) in y.iter_mut().enumerate() {
                    *v = d_obs[i] + clamp(*v - d_obs[i], lower.at(i), upper.at(i));
                }
            }
        }
    }
}

fn check_bounds(lower: &Bound, upper: &Bound) -> Result<()> {
    if let (Some(a), Some(b)) = (lower.len(), upper.len()) {
        if a != b {
            return Err(Error::InvalidParameter(format!(
                "lower bound has length {a}, upper bound {b}"
            )));
        }
    }
    let n = lower.len().or(upper.len()).unwrap_or(1);
    for i in 0..n {
        let (l, u) = (lower.at(i), upper.at(i));
        if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
            return Err(Error::InvalidParameter(format!(
                "lower bound {l} exceeds upper bound {u} at entry {i}"
            )));
        }
    }
    Ok(())
}

#[inline]
fn clamp(v: f64, l: f64, u: f64) -> f64 {
    // written out so an infinite bound simply never triggers
    if v < l {
        l
    } else if v > u {
        u
    } else {
        v
    }
}

fn clamp_in_place(y: &mut [f64], lower: &Bound, upper: &Bound) {
    for (i, v) in y.iter_mut().enumerate() {
        *v = clamp(*v, lower.at(i), upper.at(i));
    }
}

fn for_each_slice(y: &mut [f64], slice_len: usize, f: impl Fn(&mut [f64]) + Sync + Send) {
    if y.len() > slice_len && y.len() >= 4096 {
        y.par_chunks_mut(slice_len).for_each(&f);
    } else {
        y.chunks_mut(slice_len).for_each(f);
    }
}

fn l1_ball_in_place(y: &mut [f64], radius: f64) {
    let l1: f64 = y.iter().map(|v| v.abs()).sum();
    if l1 <= radius {
        return;
    }
    if radius == 0.0 {
        y.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    // sort magnitudes descending and find the soft-threshold level
    let mut mags: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &a) in mags.iter().enumerate() {
        cumsum += a;
        let t = (cumsum - radius) / (j + 1) as f64;
        if a > t {
            theta = t;
        } else {
            break;
        }
    }
    for v in y.iter_mut() {
        *v = v.signum() * (v.abs() - theta).max(0.0);
    }
}

fn annulus_in_place(y: &mut [f64], inner: f64, outer: f64, center: Option<&[f64]>) {
    let c = |i: usize| center.map_or(0.0, |c| c[i]);
    let r = y.iter().enumerate().map(|(i, v)| (v - c(i)).powi(2)).sum::<f64>().sqrt();
    if r >= inner && r <= outer {
        return;
    }
    if r == 0.0 {
        // set-valued here; step along the first coordinate axis
        for (i, v) in y.iter_mut().enumerate() {
            *v = c(i);
        }
        if let Some(first) = y.first_mut() {
            *first += inner;
        }
        return;
    }
    let target = if r > outer { outer } else { inner };
    let s = target / r;
    for (i, v) in y.iter_mut().enumerate() {
        *v = c(i) + s * (*v - c(i));
    }
}

fn cardinality_in_place(y: &mut [f64], k: usize) {
    if k >= y.len() {
        return;
    }
    if k == 0 {
        y.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    // order: larger magnitude first, then lower index
    let mut idx: Vec<usize> = (0..y.len()).collect();
    idx.select_nth_unstable_by(k - 1, |&a, &b| {
        y[b].abs().total_cmp(&y[a].abs()).then(a.cmp(&b))
    });
    let mut keep = vec![false; y.len()];
    for &i in &idx[..k] {
        keep[i] = true;
    }
    for (v, &kp) in y.iter_mut().zip(&keep) {
        if !kp {
            *v = 0.0;
        }
    }
}

/// Singular triplets `(σ, u, v)` with `σ > 0`, largest first.
///
/// nalgebra's SVD can lose accuracy on rank-deficient input (the projection of
/// a projection, near-duplicate video frames), so the triplets come from the
/// symmetric eigenproblem of `[[0, A], [Aᵀ, 0]]` instead. Its eigenvalues are
/// `±σ_i` with eigenvectors `(u_i; ±v_i)/√2`.
fn singular_triplets(a: &DMatrix<f64>, max: usize) -> Vec<(f64, DVector<f64>, DVector<f64>)> {
    let (rows, cols) = a.shape();
    let n = rows + cols;
    let mut h = DMatrix::<f64>::zeros(n, n);
    h.view_mut((0, rows), (rows, cols)).copy_from(a);
    h.view_mut((rows, 0), (cols, rows)).copy_from(&a.transpose());
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let s2 = std::f64::consts::SQRT_2;
    order
        .into_iter()
        .take(max.min(rows.min(cols)))
        .take_while(|&k| eig.eigenvalues[k] > 0.0)
        .map(|k| {
            let x = eig.eigenvectors.column(k);
            (eig.eigenvalues[k], x.rows(0, rows) * s2, x.rows(rows, cols) * s2)
        })
        .collect()
}

fn rank_in_place(y: &mut [f64], r: usize, rows: usize, cols: usize) {
    let a = DMatrix::from_column_slice(rows, cols, y);
    let mut out = DMatrix::<f64>::zeros(rows, cols);
    for (sigma, u, v) in singular_triplets(&a, r) {
        out += sigma * u * v.transpose();
    }
    y.copy_from_slice(out.as_slice());
}

fn subspace_in_place(y: &mut [f64], basis: &DMatrix<f64>) {
    let v = DVector::from_column_slice(y);
    let coeffs = basis.tr_mul(&v);
    let p = basis * coeffs;
    y.copy_from_slice(p.as_slice());
}

pub fn project_box(y: &[f64], lower: &Bound, upper: &Bound) -> Vec<f64> {
    let mut out = y.to_vec();
    clamp_in_place(&mut out, lower, upper);
    out
}

/// Box projection in a derivative domain; `upper` may be `+∞`.
pub fn project_monotone_derivative(y: &[f64], lower: &Bound, upper: &Bound) -> Vec<f64> {
    project_box(y, lower, upper)
}

pub fn project_fixed(y: &[f64], value: &Bound) -> Vec<f64> {
    (0..y.len()).map(|i| value.at(i)).collect()
}

pub fn project_l1_ball(y: &[f64], radius: f64) -> Vec<f64> {
    let mut out = y.to_vec();
    l1_ball_in_place(&mut out, radius);
    out
}

pub fn project_l2_annulus(y: &[f64], inner: f64, outer: f64, center: Option<&[f64]>) -> Vec<f64> {
    let mut out = y.to_vec();
    annulus_in_place(&mut out, inner, outer, center);
    out
}

/// Keep the `k` largest-magnitude entries of each slice (lowest index wins ties).
pub fn project_cardinality(y: &[f64], k: usize, slice_len: Option<usize>) -> Vec<f64> {
    ElementarySet::Cardinality { k, slice_len }.project(y)
}

/// Truncated SVD of each column-major `rows × cols` slice.
pub fn project_rank(y: &[f64], r: usize, rows: usize, cols: usize) -> Vec<f64> {
    ElementarySet::Rank { r, rows, cols }.project(y)
}

/// `U Uᵀ y`, slice by slice.
pub fn project_subspace(y: &[f64], basis: &DMatrix<f64>) -> Vec<f64> {
    let mut out = y.to_vec();
    for_each_slice(&mut out, basis.nrows(), |c| subspace_in_place(c, basis));
    out
}

pub fn project_pointwise_datafit(y: &[f64], d_obs: &[f64], lower: &Bound, upper: &Bound) -> Vec<f64> {
    y.iter()
        .enumerate()
        .map(|(i, &v)| d_obs[i] + clamp(v - d_obs[i], lower.at(i), upper.at(i)))
        .collect()
}

/// `‖P(Tx) − Tx‖₂ / max(‖Tx‖₂, 1)`.
pub fn feasibility_distance(x: &[f64], set: &ElementarySet, transform: &SparseMatrix) -> Result<f64> {
    let tx = transform.matvec(x)?;
    Ok(transformed_distance(&tx, set))
}

/// Same as [`feasibility_distance`] for an already transformed vector.
pub fn transformed_distance(tx: &[f64], set: &ElementarySet) -> f64 {
    let p = set.project(tx);
    dist(&p, tx) / norm(tx).max(1.0)
}
