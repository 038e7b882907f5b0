// SPDX-License-Identifier: Apache-2.0

//! Linear inverse problems as projections: a data-fit constraint on the sum,
//! and the video background/anomaly decomposition built from training frames.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::admm::{admm_project, AdmmOptions, ProjectionOutput, SolveReport};
use crate::error::{Error, Result};
use crate::grid::{ModelGrid, ModelVector};
use crate::linops::{LinearOperatorSpec, SparseMatrix};
use crate::prox::{Bound, ElementarySet};
use crate::spec::{validate, GeneralizedMinkowskiSpec, SetDescriptor, Target};

#[derive(Debug, Clone, PartialEq)]
pub enum DataFit {
    /// `lower ≤ (Gm − d_obs)[i] ≤ upper`.
    Pointwise { lower: Bound, upper: Bound },
    /// `inner ≤ ‖Gm − d_obs‖₂ ≤ outer`.
    Annulus { inner: f64, outer: f64 },
}

/// `{ m | Gm − d_obs ∈ fit }`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataFitConstraint {
    pub g: SparseMatrix,
    pub d_obs: Vec<f64>,
    pub fit: DataFit,
}

impl DataFitConstraint {
    pub fn new(g: SparseMatrix, d_obs: Vec<f64>, fit: DataFit) -> Result<Self> {
        if g.rows() != d_obs.len() {
            return Err(Error::DimensionMismatch {
                context: "data-fit operator rows vs observed data",
                expected: g.rows(),
                got: d_obs.len(),
            });
        }
        if let Some(i) = d_obs.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let dfc = DataFitConstraint { g, d_obs, fit };
        dfc.set().check_params()?;
        Ok(dfc)
    }

    pub fn set(&self) -> ElementarySet {
        match &self.fit {
            DataFit::Pointwise { lower, upper } => ElementarySet::PointwiseDataFit {
                d_obs: self.d_obs.clone(),
                lower: lower.clone(),
                upper: upper.clone(),
            },
            DataFit::Annulus { inner, outer } => ElementarySet::L2Annulus {
                inner: *inner,
                outer: *outer,
                center: Some(self.d_obs.clone()),
            },
        }
    }

    pub fn descriptor(&self) -> SetDescriptor {
        SetDescriptor::new("datafit", Target::Sum, LinearOperatorSpec::Custom(self.g.clone()), self.set())
    }

    /// `Gm − d_obs`.
    pub fn residual(&self, m: &[f64]) -> Result<Vec<f64>> {
        let gm = self.g.matvec(m)?;
        Ok(gm.iter().zip(&self.d_obs).map(|(a, b)| a - b).collect())
    }
}

/// Project `m` onto the set of `spec` intersected with the data-fit set, which
/// enters as one more `(G G)` block row on the sum.
pub fn project_with_datafit(
    m: &ModelVector,
    spec: &GeneralizedMinkowskiSpec,
    dfc: Option<&DataFitConstraint>,
    opts: &AdmmOptions,
) -> Result<ProjectionOutput> {
    match dfc {
        None => admm_project(m, spec, opts),
        Some(dfc) => {
            let full = spec.with_sum_constraint(dfc.descriptor())?;
            admm_project(m, &full, opts)
        }
    }
}

/// Cardinality budgets per time frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoBudgets {
    /// Anomaly pixels per frame.
    pub pixels: usize,
    /// Nonzeros of the derivative along the vertical (`y`, axis 1) direction.
    pub vertical: usize,
    /// Nonzeros of the derivative along the horizontal (`x`, axis 0) direction.
    pub horizontal: usize,
}

impl VideoBudgets {
    /// `⌊n_x/4⌋·⌊n_y/4⌋` anomaly pixels, `persons · width · 4` vertical and
    /// `persons · height · 2` horizontal derivative nonzeros.
    pub fn from_people(nx: usize, ny: usize, persons: usize, width: usize, height: usize) -> Self {
        VideoBudgets {
            pixels: (nx / 4) * (ny / 4),
            vertical: persons * width * 4,
            horizontal: persons * height * 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VideoOptions {
    /// Trailing frames without anomalies used to learn the background sets.
    pub training_frames: usize,
    pub budgets: VideoBudgets,
    /// Singular values below this fraction of the largest are dropped from the
    /// background subspace.
    pub subspace_rel_tol: f64,
    pub lower: f64,
    pub upper: f64,
    /// Options of the inner projection; not read from config files.
    #[serde(skip_deserializing)]
    pub admm: AdmmOptions,
}

impl Default for VideoOptions {
    fn default() -> Self {
        VideoOptions {
            training_frames: 20,
            budgets: VideoBudgets {
                pixels: 0,
                vertical: 480,
                horizontal: 440,
            },
            subspace_rel_tol: 1e-10,
            lower: 0.0,
            upper: 255.0,
            admm: AdmmOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct VideoDecomposition {
    /// Background with the frame means added back.
    pub background: ModelVector,
    pub anomaly: ModelVector,
    pub frame_means: Vec<f64>,
    /// The spec the mean-subtracted video was projected onto.
    pub spec: GeneralizedMinkowskiSpec,
    /// Components of the mean-subtracted problem.
    pub centered_background: ModelVector,
    pub report: SolveReport,
}

/// Build the background/anomaly spec from the mean-subtracted video.
///
/// `centered` is the video with every frame's mean removed; `means` holds those
/// means. Returns the spec with sets D1 (per-pixel training min/max), D2
/// (training subspace), E1 (sum bounds minus background bounds), E2–E4
/// (per-frame cardinality of values and of both derivatives) and F1
/// (`[lower, upper]` minus the frame mean).
pub fn video_spec(grid: &ModelGrid, centered: &[f64], means: &[f64], opts: &VideoOptions) -> Result<GeneralizedMinkowskiSpec> {
    if grid.ndim() != 3 {
        return Err(Error::InvalidParameter(format!(
            "video decomposition needs a 3D grid, got {:?}",
            grid.dims()
        )));
    }
    let (nx, ny, nt) = (grid.dims()[0], grid.dims()[1], grid.dims()[2]);
    let k = opts.training_frames;
    if k == 0 || k > nt {
        return Err(Error::InvalidParameter(format!(
            "need 1..={nt} training frames, got {k}"
        )));
    }
    let per = nx * ny;
    let training = &centered[(nt - k) * per..];

    let mut lo_px = vec![f64::INFINITY; per];
    let mut hi_px = vec![f64::NEG_INFINITY; per];
    for frame in training.chunks(per) {
        for p in 0..per {
            lo_px[p] = lo_px[p].min(frame[p]);
            hi_px[p] = hi_px[p].max(frame[p]);
        }
    }
    let tile = |v: &[f64]| -> Vec<f64> { (0..nt).flat_map(|_| v.iter().copied()).collect() };
    let f_lo: Vec<f64> = (0..nt).flat_map(|t| std::iter::repeat_n(opts.lower - means[t], per)).collect();
    let f_hi: Vec<f64> = (0..nt).flat_map(|t| std::iter::repeat_n(opts.upper - means[t], per)).collect();
    let d_lo = tile(&lo_px);
    let d_hi = tile(&hi_px);
    let e_lo: Vec<f64> = f_lo.iter().zip(&d_hi).map(|(a, b)| a - b).collect();
    let e_hi: Vec<f64> = f_hi.iter().zip(&d_lo).map(|(a, b)| a - b).collect();

    let frames = DMatrix::from_column_slice(per, k, training);
    let subspace = ElementarySet::subspace_from_frames(&frames, opts.subspace_rel_tol)?;

    let b = &opts.budgets;
    let descriptors = vec![
        SetDescriptor::new("D1", Target::U, LinearOperatorSpec::Identity,
            ElementarySet::Box { lower: d_lo.into(), upper: d_hi.into() }),
        SetDescriptor::new("D2", Target::U, LinearOperatorSpec::Identity, subspace),
        SetDescriptor::new("E1", Target::V, LinearOperatorSpec::Identity,
            ElementarySet::Box { lower: e_lo.into(), upper: e_hi.into() }),
        SetDescriptor::new("E2", Target::V, LinearOperatorSpec::Identity,
            ElementarySet::Cardinality { k: b.pixels, slice_len: Some(per) }),
        SetDescriptor::new("E3", Target::V, LinearOperatorSpec::Derivative { axis: 1 },
            ElementarySet::Cardinality { k: b.vertical, slice_len: Some(nx * (ny - 1)) }),
        SetDescriptor::new("E4", Target::V, LinearOperatorSpec::Derivative { axis: 0 },
            ElementarySet::Cardinality { k: b.horizontal, slice_len: Some((nx - 1) * ny) }),
        SetDescriptor::new("F1", Target::Sum, LinearOperatorSpec::Identity,
            ElementarySet::Box { lower: f_lo.into(), upper: f_hi.into() }),
    ];
    validate(grid, descriptors)
}

/// Per-frame means of a video stored with time as the slowest axis.
pub fn frame_means(video: &ModelVector) -> Vec<f64> {
    let per = video.grid().slice_len();
    video.data().chunks(per).map(|f| f.iter().sum::<f64>() / per as f64).collect()
}

/// Split a video into background and anomaly by projecting it onto the set
/// learned from its last `training_frames` frames.
///
/// Frame means are subtracted first and added back to the background on
/// output, so both components are in the units of the input.
pub fn video_decompose(video: &ModelVector, opts: &VideoOptions) -> Result<VideoDecomposition> {
    let grid = video.grid().clone();
    if grid.ndim() != 3 {
        return Err(Error::InvalidParameter(format!(
            "video decomposition needs a 3D grid, got {:?}",
            grid.dims()
        )));
    }
    let nt = grid.dims()[2];
    if opts.training_frames > nt {
        return Err(Error::InvalidParameter(format!(
            "video has {nt} frames, fewer than the {} training frames",
            opts.training_frames
        )));
    }
    let per = grid.slice_len();
    let means = frame_means(video);
    let centered: Vec<f64> = video
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| v - means[i / per])
        .collect();
    let spec = video_spec(&grid, &centered, &means, opts)?;
    let out = admm_project(&ModelVector::new(grid.clone(), centered)?, &spec, &opts.admm)?;
    let background: Vec<f64> = out
        .u
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| v + means[i / per])
        .collect();
    Ok(VideoDecomposition {
        background: ModelVector::new(grid, background)?,
        anomaly: out.v,
        frame_means: means,
        spec,
        centered_background: out.u,
        report: out.report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecops::{dist, norm};

    fn boxed(label: &str, t: Target, lo: f64, hi: f64) -> SetDescriptor {
        SetDescriptor::new(label, t, LinearOperatorSpec::Identity, ElementarySet::Box { lower: lo.into(), upper: hi.into() })
    }

    fn mask(n: usize, keep: &[usize]) -> SparseMatrix {
        let t: Vec<_> = keep.iter().enumerate().map(|(r, &c)| (r, c, 1.0)).collect();
        SparseMatrix::from_triplets(keep.len(), n, &t).unwrap()
    }

    #[test]
    fn equality_fit_returns_data() {
        let g = ModelGrid::new(&[3, 4]).unwrap();
        let spec = validate(&g, vec![boxed("d", Target::U, -5.0, 5.0), boxed("e", Target::V, -5.0, 5.0)]).unwrap();
        let d_obs: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let dfc = DataFitConstraint::new(
            SparseMatrix::identity(12),
            d_obs.clone(),
            DataFit::Pointwise { lower: 0.0.into(), upper: 0.0.into() },
        )
        .unwrap();
        let out = project_with_datafit(&ModelVector::zeros(g), &spec, Some(&dfc), &AdmmOptions::default()).unwrap();
        assert!(out.report.converged);
        assert!(dist(out.w.data(), &d_obs) <= 1e-4 * norm(&d_obs));
    }

    #[test]
    fn masked_fit_holds_on_observed_entries() {
        let g = ModelGrid::new(&[4, 4]).unwrap();
        let spec = validate(&g, vec![boxed("d", Target::U, -1.0, 0.0), boxed("e", Target::V, 0.0, 1.0)]).unwrap();
        let truth: Vec<f64> = (0..16).map(|i| ((i * 7) % 5) as f64 * 0.3 - 0.6).collect();
        let keep: Vec<usize> = (0..16).step_by(2).collect();
        let g_op = mask(16, &keep);
        let d_obs = g_op.matvec(&truth).unwrap();
        let dfc = DataFitConstraint::new(g_op, d_obs, DataFit::Pointwise { lower: (-0.05).into(), upper: 0.05.into() }).unwrap();
        let out = project_with_datafit(&ModelVector::zeros(g), &spec, Some(&dfc), &AdmmOptions::default()).unwrap();
        assert!(out.report.converged);
        for r in dfc.residual(out.w.data()).unwrap() {
            assert!(r.abs() <= 0.05 + 1e-4, "{r}");
        }
    }

    #[test]
    fn annulus_keeps_distance_from_exact_fit() {
        let g = ModelGrid::new(&[4, 3]).unwrap();
        let spec = validate(&g, vec![boxed("d", Target::U, -5.0, 5.0), boxed("e", Target::V, -5.0, 5.0)]).unwrap();
        let m: Vec<f64> = (0..12).map(|i| (i as f64 * 0.5).cos()).collect();
        let dfc = DataFitConstraint::new(SparseMatrix::identity(12), m.clone(), DataFit::Annulus { inner: 0.5, outer: 1.0 }).unwrap();
        // with unit penalties the non-convex row settles into a 2-cycle
        let opts = AdmmOptions { rho_init: 10.0, ..AdmmOptions::default() };
        let out = project_with_datafit(&ModelVector::new(g, m).unwrap(), &spec, Some(&dfc), &opts).unwrap();
        assert!(out.report.converged);
        let r = norm(&dfc.residual(out.w.data()).unwrap());
        assert!(r >= 0.5 - 1e-3, "{r}");
    }

    #[test]
    fn without_datafit_is_plain_projection() {
        let g = ModelGrid::new(&[3, 3]).unwrap();
        let spec = validate(
            &g,
            vec![boxed("d", Target::U, -1.0, 0.0), boxed("e", Target::V, 0.0, 1.0), boxed("f", Target::Sum, -0.2, 0.3)],
        )
        .unwrap();
        let m = ModelVector::new(g, (0..9).map(|i| i as f64 - 4.0).collect()).unwrap();
        let a = project_with_datafit(&m, &spec, None, &AdmmOptions::default()).unwrap();
        let b = admm_project(&m, &spec, &AdmmOptions::default()).unwrap();
        assert_eq!(a.w, b.w);
    }

    #[test]
    fn datafit_dimension_checks() {
        assert!(DataFitConstraint::new(SparseMatrix::identity(3), vec![0.0; 4], DataFit::Annulus { inner: 0.0, outer: 1.0 }).is_err());
        assert!(DataFitConstraint::new(SparseMatrix::identity(3), vec![0.0; 3], DataFit::Annulus { inner: 2.0, outer: 1.0 }).is_err());
    }

    #[test]
    fn budgets_follow_people_count() {
        let b = VideoBudgets::from_people(320, 240, 10, 12, 22);
        assert_eq!(b.vertical, 480);
        assert_eq!(b.horizontal, 440);
        assert_eq!(b.pixels, 80 * 60);
        assert_eq!(VideoBudgets::from_people(33, 25, 1, 1, 1).pixels, 8 * 6);
    }

    #[test]
    fn constant_video_has_no_anomaly() {
        let g = ModelGrid::new(&[6, 5, 8]).unwrap();
        let video = ModelVector::constant(g, 120.0);
        let opts = VideoOptions {
            training_frames: 4,
            budgets: VideoBudgets::from_people(6, 5, 1, 2, 2),
            ..VideoOptions::default()
        };
        let out = video_decompose(&video, &opts).unwrap();
        assert!(norm(out.anomaly.data()) <= 1e-4 * video.norm());
        assert!(dist(out.background.data(), video.data()) <= 1e-4 * video.norm());
    }

    #[test]
    fn too_few_frames() {
        let g = ModelGrid::new(&[4, 4, 3]).unwrap();
        let opts = VideoOptions { training_frames: 5, ..VideoOptions::default() };
        assert!(video_decompose(&ModelVector::zeros(g), &opts).is_err());
    }
}
