// SPDX-License-Identifier: Apache-2.0

//! Declarative description of a generalized Minkowski set
//! `{ m = u + v | u ∈ ∩D_i, v ∈ ∩E_j, m ∈ ∩F_k }`.

use serde::Serialize;

use crate::admm::{admm_project, AdmmOptions, SolveReport};
use crate::error::{Error, Result, Violation};
use crate::grid::{ModelGrid, ModelVector};
use crate::linops::LinearOperatorSpec;
use crate::prox::{transformed_distance, ElementarySet};

/// Default membership tolerance, matching the solver's default stopping tolerance.
pub const DEFAULT_MEMBER_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// First component (`D` sets).
    U,
    /// Second component (`E` sets).
    V,
    /// The sum `u + v` (`F` sets).
    Sum,
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Target::U => "u",
            Target::V => "v",
            Target::Sum => "sum",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetDescriptor {
    pub target: Target,
    pub transform: LinearOperatorSpec,
    pub set: ElementarySet,
    pub label: String,
}

impl SetDescriptor {
    pub fn new(
        label: impl Into<String>,
        target: Target,
        transform: LinearOperatorSpec,
        set: ElementarySet,
    ) -> Self {
        SetDescriptor {
            target,
            transform,
            set,
            label: label.into(),
        }
    }
}

/// A validated constraint specification. Construct with [`validate`].
#[derive(Debug, Clone)]
pub struct GeneralizedMinkowskiSpec {
    grid: ModelGrid,
    d_sets: Vec<SetDescriptor>,
    e_sets: Vec<SetDescriptor>,
    f_sets: Vec<SetDescriptor>,
}

/// Check every descriptor and the full-column-rank condition, returning all
/// violations at once.
///
/// Each component needs at least one identity-transform bound (box or fixed)
/// set so that the x-update system is positive definite.
pub fn validate(grid: &ModelGrid, descriptors: Vec<SetDescriptor>) -> Result<GeneralizedMinkowskiSpec> {
    let mut violations = Vec::new();
    for d in &descriptors {
        check_descriptor(grid, d, &mut violations);
    }
    for (target, name) in [(Target::U, "component u"), (Target::V, "component v")] {
        let mut sets = descriptors.iter().filter(|d| d.target == target).peekable();
        if sets.peek().is_none() {
            violations.push(Violation {
                label: name.into(),
                message: format!("{name} unconstrained"),
            });
        } else if !sets.any(|d| d.transform.is_identity() && d.set.is_bound_like()) {
            violations.push(Violation {
                label: name.into(),
                message: format!(
                    "{name} has no identity-transform bound or fixed set (needed for a positive definite system)"
                ),
            });
        }
    }
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    let pick = |t: Target| -> Vec<SetDescriptor> {
        descriptors.iter().filter(|d| d.target == t).cloned().collect()
    };
    Ok(GeneralizedMinkowskiSpec {
        grid: grid.clone(),
        d_sets: pick(Target::U),
        e_sets: pick(Target::V),
        f_sets: pick(Target::Sum),
    })
}

fn check_descriptor(grid: &ModelGrid, d: &SetDescriptor, out: &mut Vec<Violation>) {
    let mut push = |m: String| {
        out.push(Violation {
            label: d.label.clone(),
            message: m,
        })
    };
    if let Err(e) = d.set.check_params() {
        push(strip(e));
    }
    match d.transform.rows(grid) {
        Ok(rows) => {
            if let LinearOperatorSpec::Custom(m) = &d.transform {
                if m.cols() != grid.len() {
                    push(format!(
                        "operator has {} columns, grid has {} cells",
                        m.cols(),
                        grid.len()
                    ));
                }
            }
            if let Err(e) = d.set.check_dim(rows) {
                push(strip(e));
            }
        }
        Err(e) => push(strip(e)),
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::InvalidParameter(m) => m,
        other => other.to_string(),
    }
}

impl GeneralizedMinkowskiSpec {
    pub fn grid(&self) -> &ModelGrid {
        &self.grid
    }

    pub fn d_sets(&self) -> &[SetDescriptor] {
        &self.d_sets
    }

    pub fn e_sets(&self) -> &[SetDescriptor] {
        &self.e_sets
    }

    pub fn f_sets(&self) -> &[SetDescriptor] {
        &self.f_sets
    }

    pub fn p(&self) -> usize {
        self.d_sets.len()
    }

    pub fn q(&self) -> usize {
        self.e_sets.len()
    }

    pub fn r(&self) -> usize {
        self.f_sets.len()
    }

    /// Number of block rows including the final `(I I)` row.
    pub fn s(&self) -> usize {
        self.p() + self.q() + self.r() + 1
    }

    /// D, E, then F descriptors, in configuration order within each group.
    pub fn descriptors(&self) -> impl Iterator<Item = &SetDescriptor> {
        self.d_sets.iter().chain(&self.e_sets).chain(&self.f_sets)
    }

    pub fn all_convex(&self) -> bool {
        self.descriptors().all(|d| d.set.is_convex())
    }

    /// A copy with one more constraint on the sum, appended after the existing F sets.
    pub fn with_sum_constraint(&self, descriptor: SetDescriptor) -> Result<Self> {
        let mut all: Vec<SetDescriptor> = self.descriptors().cloned().collect();
        all.push(SetDescriptor {
            target: Target::Sum,
            ..descriptor
        });
        validate(&self.grid, all)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetDistance {
    pub label: String,
    pub target: Target,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    pub member: bool,
    pub distances: Vec<SetDistance>,
}

impl Membership {
    /// Labels of the sets whose distance exceeds `tol`.
    pub fn violated(&self, tol: f64) -> Vec<&str> {
        self.distances
            .iter()
            .filter(|d| d.distance > tol)
            .map(|d| d.label.as_str())
            .collect()
    }

    pub fn max_distance(&self) -> f64 {
        self.distances.iter().fold(0.0, |m, d| m.max(d.distance))
    }
}

/// Per-set normalized distances of `u` to the D sets, `v` to the E sets and
/// `u + v` to the F sets.
pub fn set_distances(spec: &GeneralizedMinkowskiSpec, u: &[f64], v: &[f64]) -> Result<Vec<SetDistance>> {
    let n = spec.grid.len();
    for x in [u, v] {
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                context: "membership check",
                expected: n,
                got: x.len(),
            });
        }
    }
    let w: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + b).collect();
    let mut out = Vec::with_capacity(spec.s() - 1);
    for d in spec.descriptors() {
        let arg = match d.target {
            Target::U => u,
            Target::V => v,
            Target::Sum => &w[..],
        };
        let tx = d.transform.build(&spec.grid)?.matvec(arg)?;
        out.push(SetDistance {
            label: d.label.clone(),
            target: d.target,
            distance: transformed_distance(&tx, &d.set),
        });
    }
    Ok(out)
}

pub fn is_member(spec: &GeneralizedMinkowskiSpec, u: &ModelVector, v: &ModelVector, tol: f64) -> Result<Membership> {
    let distances = set_distances(spec, u.data(), v.data())?;
    Ok(Membership {
        member: distances.iter().all(|d| d.distance <= tol),
        distances,
    })
}

/// Draw an element of the set by projecting `seed`.
pub fn sample_element(
    spec: &GeneralizedMinkowskiSpec,
    seed: &ModelVector,
    opts: &AdmmOptions,
) -> Result<(ModelVector, ModelVector, SolveReport)> {
    let out = admm_project(seed, spec, opts)?;
    Ok((out.u, out.v, out.report))
}
