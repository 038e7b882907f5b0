// SPDX-License-Identifier: Apache-2.0

//! Turn a parsed config into core types.

use minkproj_core::inverse::{DataFit, DataFitConstraint};
use minkproj_core::io::{read_gmsk, read_sparse};
use minkproj_core::nalgebra::DMatrix;
use minkproj_core::{
    validate, Bound, ElementarySet, Error, GeneralizedMinkowskiSpec, LinearOperatorSpec, ModelGrid, ModelVector,
    Result, SetDescriptor, Target,
};

use crate::config::{
    AxisConfig, ConstraintConfig, DataFitConfig, FileConfig, FitConfig, SetConfig, TargetConfig, TransformConfig,
    ValueConfig,
};

/// Grid from `[grid]`, or from the input model when `[grid]` is absent.
/// When both are present their shapes must agree.
pub fn grid(cfg: &FileConfig) -> Result<ModelGrid> {
    let from_input = match &cfg.input.model {
        Some(p) => Some(read_gmsk(p)?.grid().clone()),
        None => None,
    };
    match (&cfg.grid, from_input) {
        (Some(g), input) => {
            let grid = if g.labels.is_empty() {
                ModelGrid::new(&g.dims)?
            } else {
                ModelGrid::with_labels(&g.dims, &g.labels)?
            };
            if let Some(i) = input {
                if i.dims() != grid.dims() {
                    return Err(Error::Config(format!(
                        "[grid] dims {:?} disagree with input.model dims {:?}",
                        grid.dims(),
                        i.dims()
                    )));
                }
            }
            Ok(grid)
        }
        (None, Some(i)) => Ok(i),
        (None, None) => Err(Error::Config("no [grid] section and no input.model to take the grid from".into())),
    }
}

/// Starting point from `[input]`: the model file, the constant, or zeros.
pub fn initial_model(cfg: &FileConfig, grid: &ModelGrid) -> Result<ModelVector> {
    match (&cfg.input.model, cfg.input.constant) {
        (Some(_), Some(_)) => Err(Error::Config("input.model and input.constant are mutually exclusive".into())),
        (Some(p), None) => {
            let m = read_gmsk(p)?;
            ModelVector::new(grid.clone(), m.into_data())
        }
        (None, Some(c)) => Ok(ModelVector::constant(grid.clone(), c)),
        (None, None) => Ok(ModelVector::zeros(grid.clone())),
    }
}

fn bound(v: &ValueConfig) -> Result<Bound> {
    Ok(match v {
        ValueConfig::Scalar(x) => Bound::Scalar(*x),
        ValueConfig::File(p) => Bound::PerEntry(read_gmsk(p)?.into_data()),
    })
}

fn axis(grid: &ModelGrid, a: &AxisConfig) -> Result<usize> {
    match a {
        AxisConfig::Index(i) => Ok(*i),
        AxisConfig::Label(l) => grid
            .axis_index(l)
            .ok_or_else(|| Error::Config(format!("unknown axis label '{l}' (grid axes {:?})", grid.labels()))),
    }
}

fn transform(grid: &ModelGrid, t: &TransformConfig) -> Result<LinearOperatorSpec> {
    Ok(match t {
        TransformConfig::Identity => LinearOperatorSpec::Identity,
        TransformConfig::Derivative { axis: a } => LinearOperatorSpec::Derivative { axis: axis(grid, a)? },
        TransformConfig::Gradient { axes } => LinearOperatorSpec::Gradient {
            axes: axes.iter().map(|a| axis(grid, a)).collect::<Result<_>>()?,
        },
        TransformConfig::Matrix { path } => LinearOperatorSpec::Custom(read_sparse(path)?),
    })
}

fn constraint(grid: &ModelGrid, op: &LinearOperatorSpec, c: &ConstraintConfig) -> Result<ElementarySet> {
    Ok(match c {
        ConstraintConfig::Box { lower, upper } => ElementarySet::Box { lower: bound(lower)?, upper: bound(upper)? },
        ConstraintConfig::Fixed { value } => ElementarySet::Fixed { value: bound(value)? },
        ConstraintConfig::L1Ball { radius } => ElementarySet::L1Ball { radius: *radius },
        ConstraintConfig::L2Ball { radius } => ElementarySet::L2Ball { radius: *radius },
        ConstraintConfig::L2Annulus { inner, outer, center } => ElementarySet::L2Annulus {
            inner: *inner,
            outer: *outer,
            center: match center {
                Some(p) => Some(read_gmsk(p)?.into_data()),
                None => None,
            },
        },
        ConstraintConfig::Cardinality { k, per_slice } => {
            let slice_len = if *per_slice {
                let rows = op.rows(grid)?;
                let slices = grid.n_slices();
                if rows % slices != 0 {
                    return Err(Error::Config(format!(
                        "per_slice: {rows} transformed entries do not split into {slices} slices"
                    )));
                }
                Some(rows / slices)
            } else {
                None
            };
            ElementarySet::Cardinality { k: *k, slice_len }
        }
        ConstraintConfig::Rank { r, rows, cols } => {
            let dims = op.output_dims(grid).unwrap_or_default();
            let pick = |given: Option<usize>, axis: usize, name: &str| {
                given.or_else(|| dims.get(axis).copied()).ok_or_else(|| {
                    Error::Config(format!("rank: {name} not given and the transform output has no axis {axis}"))
                })
            };
            ElementarySet::Rank { r: *r, rows: pick(*rows, 0, "rows")?, cols: pick(*cols, 1, "cols")? }
        }
        ConstraintConfig::Subspace { basis } => {
            let b = read_gmsk(basis)?;
            let dims = b.grid().dims();
            if dims.len() != 2 {
                return Err(Error::Config(format!("subspace basis must be a 2D grid, got dims {dims:?}")));
            }
            ElementarySet::Subspace { basis: DMatrix::from_column_slice(dims[0], dims[1], b.data()) }
        }
        ConstraintConfig::PointwiseDatafit { data, lower, upper } => ElementarySet::PointwiseDataFit {
            d_obs: read_gmsk(data)?.into_data(),
            lower: bound(lower)?,
            upper: bound(upper)?,
        },
    })
}

/// Descriptor for one `[[set]]` entry.
pub fn descriptor(grid: &ModelGrid, s: &SetConfig) -> Result<SetDescriptor> {
    let op = transform(grid, &s.transform)?;
    let set = constraint(grid, &op, &s.constraint)?;
    let target = match s.target {
        TargetConfig::U => Target::U,
        TargetConfig::V => Target::V,
        TargetConfig::Sum => Target::Sum,
    };
    Ok(SetDescriptor::new(s.label.clone(), target, op, set))
}

/// All `[[set]]` entries, validated together. Errors from reading a set's
/// files are tagged with that set's label.
pub fn spec(cfg: &FileConfig, grid: &ModelGrid) -> std::result::Result<GeneralizedMinkowskiSpec, (Option<String>, Error)> {
    let mut descriptors = Vec::with_capacity(cfg.sets.len());
    for s in &cfg.sets {
        descriptors.push(descriptor(grid, s).map_err(|e| (Some(s.label.clone()), e))?);
    }
    validate(grid, descriptors).map_err(|e| (None, e))
}

pub fn datafit(d: &DataFitConfig, grid: &ModelGrid) -> Result<DataFitConstraint> {
    let g = read_sparse(&d.operator)?;
    if g.cols() != grid.len() {
        return Err(Error::DimensionMismatch {
            context: "datafit.operator columns",
            expected: grid.len(),
            got: g.cols(),
        });
    }
    let d_obs = read_gmsk(&d.data)?.into_data();
    let fit = match &d.fit {
        FitConfig::Pointwise { lower, upper } => DataFit::Pointwise { lower: bound(lower)?, upper: bound(upper)? },
        FitConfig::Annulus { inner, outer } => DataFit::Annulus { inner: *inner, outer: *outer },
    };
    DataFitConstraint::new(g, d_obs, fit)
}

/// Values of a [`ValueConfig`] spread over `n` entries.
pub fn values(v: &ValueConfig, n: usize) -> Result<Vec<f64>> {
    match bound(v)? {
        Bound::Scalar(x) => Ok(vec![x; n]),
        Bound::PerEntry(x) if x.len() == n => Ok(x),
        Bound::PerEntry(x) => Err(Error::DimensionMismatch { context: "value file", expected: n, got: x.len() }),
    }
}
