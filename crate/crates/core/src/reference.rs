// SPDX-License-Identifier: Apache-2.0

//! Slow, simple solvers used to cross-check [`admm_project`](crate::admm_project).
//!
//! They only handle identity transforms and small grids. Nothing here shares
//! code with the ADMM path beyond the elementary projections.

use crate::error::{Error, Result};
use crate::spec::{GeneralizedMinkowskiSpec, Target};
use crate::vecops::dist;

pub type Projector<'a> = dyn Fn(&[f64]) -> Vec<f64> + 'a;

/// Dykstra's alternating projections onto `∩ C_k`, starting from `x0`.
///
/// Stops when one full sweep moves the iterate by less than `tol` (absolute)
/// or after `max_sweeps`. Returns the point and the number of sweeps.
pub fn dykstra(
    x0: &[f64],
    projections: &[&Projector],
    tol: f64,
    max_sweeps: usize,
) -> (Vec<f64>, usize) {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut incr = vec![vec![0.0; n]; projections.len()];
    for sweep in 1..=max_sweeps {
        let start = x.clone();
        for (p, inc) in projections.iter().zip(incr.iter_mut()) {
            let shifted: Vec<f64> = x.iter().zip(inc.iter()).map(|(a, b)| a + b).collect();
            let next = p(&shifted);
            for k in 0..n {
                inc[k] = shifted[k] - next[k];
            }
            x = next;
        }
        if dist(&x, &start) <= tol {
            return (x, sweep);
        }
    }
    (x, max_sweeps)
}

/// Result of [`lifted_projected_gradient`].
#[derive(Debug, Clone)]
pub struct LiftedSolution {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize `½‖u + v − m‖²` over `u ∈ ∩D`, `v ∈ ∩E`, `u + v ∈ ∩F` by projected
/// gradient on the stacked variable, step `1/2` (the gradient is 2-Lipschitz).
///
/// Each projection onto the lifted feasible set is itself computed with
/// Dykstra between `D × E` and one set `{(u, v) | u + v ∈ F_k}` per F
/// constraint, whose projection moves both parts by half the correction of
/// the sum. Only identity transforms are supported.
pub fn lifted_projected_gradient(
    spec: &GeneralizedMinkowskiSpec,
    m: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<LiftedSolution> {
    if spec.descriptors().any(|d| !d.transform.is_identity()) {
        return Err(Error::InvalidParameter(
            "the lifted reference solver only supports identity transforms".into(),
        ));
    }
    let n = spec.grid().len();
    if m.len() != n {
        return Err(Error::DimensionMismatch {
            context: "reference solver",
            expected: n,
            got: m.len(),
        });
    }

    let components = |x: &[f64]| -> Vec<f64> {
        let (u, v) = x.split_at(n);
        let mut out = Vec::with_capacity(2 * n);
        let mut pu = u.to_vec();
        for d in spec.d_sets() {
            pu = d.set.project(&pu);
        }
        let mut pv = v.to_vec();
        for e in spec.e_sets() {
            pv = e.set.project(&pv);
        }
        out.extend(pu);
        out.extend(pv);
        out
    };
    if spec.d_sets().len() > 1 || spec.e_sets().len() > 1 {
        return Err(Error::InvalidParameter(
            "the lifted reference solver supports one set per component".into(),
        ));
    }
    let sum_projectors: Vec<Box<Projector<'_>>> = spec
        .f_sets()
        .iter()
        .map(|f| {
            Box::new(move |x: &[f64]| {
                let (u, v) = x.split_at(n);
                let s: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + b).collect();
                let ps = f.set.project(&s);
                let mut out = x.to_vec();
                for k in 0..n {
                    let half = 0.5 * (ps[k] - s[k]);
                    out[k] += half;
                    out[k + n] += half;
                }
                out
            }) as Box<Projector>
        })
        .collect();
    let mut projections: Vec<&Projector> = vec![&components];
    projections.extend(sum_projectors.iter().map(|b| b.as_ref()));

    let project = |x: &[f64]| dykstra(x, &projections, 1e-3 * tol, 1_000_000).0;

    let mut x = vec![0.0; 2 * n];
    x[..n].copy_from_slice(m);
    x = project(&x);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=max_iters {
        iterations = it;
        let step: Vec<f64> = (0..2 * n)
            .map(|k| {
                let r = x[k % n] + x[n + k % n] - m[k % n];
                x[k] - 0.5 * r
            })
            .collect();
        let next = project(&step);
        let moved = dist(&next, &x);
        x = next;
        if moved <= tol {
            converged = true;
            break;
        }
    }
    let (u, v) = x.split_at(n);
    let w = u.iter().zip(v).map(|(a, b)| a + b).collect();
    Ok(LiftedSolution {
        u: u.to_vec(),
        v: v.to_vec(),
        w,
        iterations,
        converged,
    })
}

/// Projection of `m` onto `(D + E) ∩ F` for single box sets `D`, `E` and
/// identity-transform `F` sets, by Dykstra in the space of the sum.
/// The Minkowski sum of two boxes is the box of summed bounds.
pub fn sum_space_dykstra(spec: &GeneralizedMinkowskiSpec, m: &[f64], tol: f64) -> Result<Vec<f64>> {
    use crate::prox::{project_box, Bound, ElementarySet};
    let bounds = |t: Target| -> Result<(Vec<f64>, Vec<f64>)> {
        let sets = match t {
            Target::U => spec.d_sets(),
            Target::V => spec.e_sets(),
            Target::Sum => unreachable!(),
        };
        let n = spec.grid().len();
        match sets {
            [d] if d.transform.is_identity() => match &d.set {
                ElementarySet::Box { lower, upper } => {
                    Ok(((0..n).map(|i| lower.at(i)).collect(), (0..n).map(|i| upper.at(i)).collect()))
                }
                ElementarySet::Fixed { value } => {
                    let c: Vec<f64> = (0..n).map(|i| value.at(i)).collect();
                    Ok((c.clone(), c))
                }
                _ => Err(Error::InvalidParameter("component sets must be boxes".into())),
            },
            _ => Err(Error::InvalidParameter("one identity box per component".into())),
        }
    };
    if spec.f_sets().iter().any(|f| !f.transform.is_identity()) {
        return Err(Error::InvalidParameter("F sets must use identity transforms".into()));
    }
    let (lu, uu) = bounds(Target::U)?;
    let (lv, uv) = bounds(Target::V)?;
    let lo = Bound::PerEntry(lu.iter().zip(&lv).map(|(a, b)| a + b).collect());
    let hi = Bound::PerEntry(uu.iter().zip(&uv).map(|(a, b)| a + b).collect());
    let sum_box = move |x: &[f64]| project_box(x, &lo, &hi);
    let fs: Vec<Box<Projector>> = spec
        .f_sets()
        .iter()
        .map(|f| {
            let set = f.set.clone();
            Box::new(move |x: &[f64]| set.project(x)) as Box<Projector>
        })
        .collect();
    let mut projections: Vec<&Projector> = vec![&sum_box];
    projections.extend(fs.iter().map(|b| b.as_ref()));
    Ok(dykstra(m, &projections, tol, 10_000_000).0)
}
