// SPDX-License-Identifier: Apache-2.0

//! Projection onto a generalized Minkowski set with relaxed ADMM.
//!
//! With `x = (u; v)` and one block row `A_i` of `Ã` per constraint, plus the
//! final `(I I)` row carrying `½‖y_s − m‖²`, each iteration does
//!
//! ```text
//! x      = Q⁻¹ Σ A_iᵀ(ρ_i y_i + v_i)            Q = Σ ρ_i A_iᵀA_i, solved by warm-started CG
//! x̄_i    = γ_i A_i x + (1 − γ_i) y_i
//! y_i    = prox_{f_i, ρ_i}(x̄_i − v_i / ρ_i)     projection, or (m + ρ a)/(1 + ρ) for i = s
//! v_i   += ρ_i (y_i − x̄_i)
//! ```
//!
//! The per-row updates are independent and run on the rayon pool; every
//! reduction over rows is summed in row order so results do not depend on
//! the thread count.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cg::conjugate_gradient;
use crate::error::{Error, Result};
use crate::grid::{ModelVector, StackedVector};
use crate::linops::{BlockSystem, SparseMatrix};
use crate::prox::ElementarySet;
use crate::spec::{set_distances, GeneralizedMinkowskiSpec, SetDistance};
use crate::vecops::{axpy, dist, norm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmmOptions {
    pub max_iters: usize,
    /// Relative primal tolerance, applied to every block row.
    pub eps_primal: f64,
    /// Relative dual tolerance.
    pub eps_dual: f64,
    /// Relative residual target of each x-update.
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    pub rho_init: f64,
    /// Relaxation, in `(0, 2]`.
    pub gamma: f64,
    /// Residual balancing of the per-row penalties.
    pub adapt: bool,
    pub adapt_every: usize,
    /// Penalties stay within `[rho_init / cap, rho_init · cap]`.
    pub adapt_factor_cap: f64,
    /// Primal/dual imbalance that triggers a penalty change.
    pub adapt_ratio: f64,
    /// No more penalty changes after this iteration.
    pub adapt_until: usize,
    pub stagnation_window: usize,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        AdmmOptions {
            max_iters: 2000,
            eps_primal: 1e-4,
            eps_dual: 1e-4,
            cg_tol: 1e-8,
            cg_max_iters: 1000,
            rho_init: 1.0,
            gamma: 1.0,
            adapt: true,
            adapt_every: 10,
            adapt_factor_cap: 10.0,
            adapt_ratio: 10.0,
            adapt_until: 500,
            stagnation_window: 100,
        }
    }
}

impl AdmmOptions {
    pub fn check(&self) -> Result<()> {
        let positive = [
            ("eps_primal", self.eps_primal),
            ("eps_dual", self.eps_dual),
            ("cg_tol", self.cg_tol),
            ("rho_init", self.rho_init),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 2.0) {
            return Err(Error::InvalidParameter(format!(
                "relaxation gamma must lie in (0, 2], got {}",
                self.gamma
            )));
        }
        if self.adapt && (self.adapt_every == 0 || self.adapt_factor_cap < 1.0 || self.adapt_ratio <= 1.0) {
            return Err(Error::InvalidParameter(
                "adaptation needs adapt_every >= 1, adapt_factor_cap >= 1 and adapt_ratio > 1".into(),
            ));
        }
        if self.cg_max_iters == 0 {
            return Err(Error::InvalidParameter("cg_max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// One line of the residual trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub max_primal: f64,
    pub dual: f64,
    pub cg_iterations: usize,
    pub rho_changed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowReport {
    pub label: String,
    pub primal: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    /// Final relative primal residual and penalty per block row.
    pub rows: Vec<RowReport>,
    pub dual_residual: f64,
    pub cg_iterations: usize,
    pub feasibility: Vec<SetDistance>,
    /// Raised when the primal residual stopped decreasing for a full window;
    /// often a sign that the constraint sets do not intersect.
    pub stagnation_warning: bool,
    pub history: Vec<IterationRecord>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl SolveReport {
    pub fn max_primal(&self) -> f64 {
        self.rows.iter().fold(0.0, |m, r| m.max(r.primal))
    }

    pub fn max_feasibility_distance(&self) -> f64 {
        self.feasibility.iter().fold(0.0, |m, d| m.max(d.distance))
    }
}

#[derive(Debug, Clone)]
pub struct ProjectionOutput {
    /// The projection, `u + v`.
    pub w: ModelVector,
    pub u: ModelVector,
    pub v: ModelVector,
    pub report: SolveReport,
}

/// Iterates of the splitting.
#[derive(Debug, Clone)]
pub struct AdmmState {
    /// Flat `[u; v]`.
    pub x: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    /// Lagrange multipliers, one per block row.
    pub v: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
    pub gamma: Vec<f64>,
    pub iteration: usize,
    pub q: SparseMatrix,
    pub rhs: Vec<f64>,
}

/// Per-row residuals of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    /// `‖y_i − A_i x‖`.
    pub primal: Vec<f64>,
    /// `‖y_i − A_i x‖ / max(‖y_i‖, ‖A_i x‖, 1)`.
    pub primal_rel: Vec<f64>,
    /// `ρ_i ‖A_iᵀ(y_i⁺ − y_i)‖`.
    pub dual: Vec<f64>,
    /// `‖Σ ρ_i A_iᵀ(y_i⁺ − y_i)‖ / max(‖Σ ρ_i A_iᵀ y_i⁺‖, 1)`.
    pub dual_rel: f64,
}

pub struct AdmmSolver<'a> {
    spec: &'a GeneralizedMinkowskiSpec,
    blocks: BlockSystem,
    m: Vec<f64>,
    opts: AdmmOptions,
    state: AdmmState,
}

enum Prox<'s> {
    Set(&'s ElementarySet),
    Distance,
}

impl<'a> AdmmSolver<'a> {
    /// Set up the iteration for projecting `m`.
    ///
    /// Starts from `u = m`, `v = 0`, `y_i = A_i x`, zero multipliers.
    pub fn new(m: &ModelVector, spec: &'a GeneralizedMinkowskiSpec, opts: &AdmmOptions) -> Result<Self> {
        opts.check()?;
        if m.grid() != spec.grid() {
            return Err(Error::GridMismatch(m.grid().dims().to_vec(), spec.grid().dims().to_vec()));
        }
        let blocks = BlockSystem::assemble(spec)?;
        let n = m.len();
        let mut x = vec![0.0; 2 * n];
        x[..n].copy_from_slice(m.data());
        let s = blocks.s();
        let y = blocks.apply(&x);
        let v: Vec<Vec<f64>> = (0..s).map(|i| vec![0.0; blocks.row_len(i)]).collect();
        let rho = vec![opts.rho_init; s];
        let q = blocks.assemble_q(&rho)?;
        let mut solver = AdmmSolver {
            spec,
            blocks,
            m: m.data().to_vec(),
            opts: opts.clone(),
            state: AdmmState {
                x,
                y,
                v,
                rho,
                gamma: vec![opts.gamma; s],
                iteration: 0,
                q,
                rhs: Vec::new(),
            },
        };
        solver.state.rhs = solver.assemble_rhs();
        Ok(solver)
    }

    pub fn state(&self) -> &AdmmState {
        &self.state
    }

    pub fn blocks(&self) -> &BlockSystem {
        &self.blocks
    }

    fn prox_for(&self, i: usize) -> Prox<'a> {
        let spec: &'a GeneralizedMinkowskiSpec = self.spec;
        match spec.descriptors().nth(i) {
            Some(d) => Prox::Set(&d.set),
            None => Prox::Distance,
        }
    }

    /// `Σ A_iᵀ(ρ_i y_i + v_i)`, reduced in row order.
    fn assemble_rhs(&self) -> Vec<f64> {
        let st = &self.state;
        let parts: Vec<Vec<f64>> = (0..self.blocks.s())
            .into_par_iter()
            .map(|i| {
                let t: Vec<f64> = st.y[i]
                    .iter()
                    .zip(&st.v[i])
                    .map(|(y, v)| st.rho[i] * y + v)
                    .collect();
                let mut out = vec![0.0; st.x.len()];
                self.blocks.apply_row_transpose_add(i, &t, &mut out);
                out
            })
            .collect();
        sum_in_order(parts, st.x.len())
    }

    /// Solve `Q x = rhs` by CG warm-started at the current `x`. Returns the
    /// number of CG iterations.
    pub fn x_update(&mut self) -> Result<usize> {
        let st = &mut self.state;
        let out = conjugate_gradient(&st.q, &st.rhs, &mut st.x, self.opts.cg_tol, self.opts.cg_max_iters)?;
        if !out.converged {
            log::debug!(
                "CG stopped at relative residual {:e} after {} iterations",
                out.relative_residual(),
                out.iterations
            );
        }
        Ok(out.iterations)
    }

    /// Relaxation, prox and multiplier updates for every row, then the next
    /// right-hand side.
    pub fn y_v_update(&mut self) -> Residuals {
        let x = &self.state.x;
        let m = &self.m;
        let blocks = &self.blocks;
        let two_n = x.len();
        let proxes: Vec<Prox<'a>> = (0..blocks.s()).map(|i| self.prox_for(i)).collect();

        struct RowOut {
            y: Vec<f64>,
            v: Vec<f64>,
            primal: f64,
            primal_rel: f64,
            dy_back: Vec<f64>,
            rho_y_back: Vec<f64>,
            rhs_part: Vec<f64>,
        }

        let st = &self.state;
        let outs: Vec<RowOut> = (0..blocks.s())
            .into_par_iter()
            .map(|i| {
                let (rho, gamma) = (st.rho[i], st.gamma[i]);
                let ax = blocks.apply_row(i, x);
                let y_old = &st.y[i];
                let xbar: Vec<f64> = ax
                    .iter()
                    .zip(y_old)
                    .map(|(a, y)| gamma * a + (1.0 - gamma) * y)
                    .collect();
                let mut y: Vec<f64> = xbar.iter().zip(&st.v[i]).map(|(xb, v)| xb - v / rho).collect();
                match &proxes[i] {
                    Prox::Set(set) => set.project_in_place(&mut y),
                    Prox::Distance => {
                        for (yk, mk) in y.iter_mut().zip(m) {
                            *yk = (mk + rho * *yk) / (1.0 + rho);
                        }
                    }
                }
                let v: Vec<f64> = st.v[i]
                    .iter()
                    .zip(y.iter().zip(&xbar))
                    .map(|(v, (yk, xb))| v + rho * (yk - xb))
                    .collect();
                let primal = dist(&y, &ax);
                let primal_rel = primal / norm(&y).max(norm(&ax)).max(1.0);

                let dy: Vec<f64> = y.iter().zip(y_old).map(|(a, b)| rho * (a - b)).collect();
                let mut dy_back = vec![0.0; two_n];
                blocks.apply_row_transpose_add(i, &dy, &mut dy_back);

                let ry: Vec<f64> = y.iter().map(|yk| rho * yk).collect();
                let mut rho_y_back = vec![0.0; two_n];
                blocks.apply_row_transpose_add(i, &ry, &mut rho_y_back);
                let mut rhs_part = rho_y_back.clone();
                blocks.apply_row_transpose_add(i, &v, &mut rhs_part);
                RowOut {
                    y,
                    v,
                    primal,
                    primal_rel,
                    dy_back,
                    rho_y_back,
                    rhs_part,
                }
            })
            .collect();

        let mut res = Residuals {
            primal: Vec::with_capacity(outs.len()),
            primal_rel: Vec::with_capacity(outs.len()),
            dual: Vec::with_capacity(outs.len()),
            dual_rel: 0.0,
        };
        let mut dual_sum = vec![0.0; two_n];
        let mut rhs = vec![0.0; two_n];
        let mut rho_y_sum = vec![0.0; two_n];
        for (i, o) in outs.into_iter().enumerate() {
            res.primal.push(o.primal);
            res.primal_rel.push(o.primal_rel);
            res.dual.push(norm(&o.dy_back));
            axpy(1.0, &o.dy_back, &mut dual_sum);
            axpy(1.0, &o.rhs_part, &mut rhs);
            axpy(1.0, &o.rho_y_back, &mut rho_y_sum);
            self.state.y[i] = o.y;
            self.state.v[i] = o.v;
        }
        res.dual_rel = norm(&dual_sum) / norm(&rho_y_sum).max(1.0);
        self.state.rhs = rhs;
        res
    }

    /// Residual balancing: a row whose primal residual exceeds `adapt_ratio`
    /// times its dual residual gets its penalty doubled, the reverse halves it,
    /// both clamped to the cap. Multipliers are kept as they are (they are
    /// unscaled), Q is rebuilt from the cached Gram blocks and the right-hand
    /// side recomputed. Returns whether any penalty changed.
    pub fn adapt_parameters(&mut self, res: &Residuals) -> Result<bool> {
        let (lo, hi) = (
            self.opts.rho_init / self.opts.adapt_factor_cap,
            self.opts.rho_init * self.opts.adapt_factor_cap,
        );
        let mut changed = false;
        for i in 0..self.blocks.s() {
            let rho = self.state.rho[i];
            let next = if res.primal[i] > self.opts.adapt_ratio * res.dual[i] {
                (2.0 * rho).min(hi)
            } else if res.dual[i] > self.opts.adapt_ratio * res.primal[i] {
                (0.5 * rho).max(lo)
            } else {
                rho
            };
            if next != rho {
                self.state.rho[i] = next;
                changed = true;
            }
        }
        if changed {
            self.state.q = self.blocks.assemble_q(&self.state.rho)?;
            self.state.rhs = self.assemble_rhs();
        }
        Ok(changed)
    }

    /// Run to convergence or `max_iters`.
    pub fn run(mut self) -> Result<ProjectionOutput> {
        let start = Instant::now();
        let opts = self.opts.clone();
        let mut history = Vec::new();
        let mut cg_total = 0;
        let mut converged = false;
        let mut best_primal = f64::INFINITY;
        let mut best_iter = 0;
        let mut stagnation = false;
        let mut last: Option<Residuals> = None;

        while self.state.iteration < opts.max_iters {
            self.state.iteration += 1;
            let it = self.state.iteration;
            let cg_iters = self.x_update()?;
            cg_total += cg_iters;
            let res = self.y_v_update();
            let max_primal = res.primal_rel.iter().fold(0.0f64, |a, &b| a.max(b));

            if max_primal < best_primal * (1.0 - 1e-3) {
                best_primal = max_primal;
                best_iter = it;
            } else if !stagnation && it - best_iter >= opts.stagnation_window {
                stagnation = true;
                log::warn!(
                    "primal residual has not decreased for {} iterations (best {:e}); possible empty intersection",
                    opts.stagnation_window,
                    best_primal
                );
            }

            if max_primal <= opts.eps_primal && res.dual_rel <= opts.eps_dual {
                converged = true;
            }
            let mut rho_changed = false;
            if !converged && opts.adapt && it.is_multiple_of(opts.adapt_every) && it <= opts.adapt_until {
                rho_changed = self.adapt_parameters(&res)?;
            }
            history.push(IterationRecord {
                iteration: it,
                max_primal,
                dual: res.dual_rel,
                cg_iterations: cg_iters,
                rho_changed,
            });
            last = Some(res);
            if converged {
                break;
            }
        }

        let grid = self.spec.grid().clone();
        let x = StackedVector::from_flat(&grid, &self.state.x)?;
        let feasibility = set_distances(self.spec, x.u().data(), x.v().data())?;
        let w = x.sum();
        let (u, v) = x.split();
        let rows = self
            .blocks
            .rows()
            .iter()
            .enumerate()
            .map(|(i, row)| RowReport {
                label: row.label.clone(),
                primal: last.as_ref().map_or(f64::NAN, |r| r.primal_rel[i]),
                rho: self.state.rho[i],
            })
            .collect();
        let report = SolveReport {
            converged,
            iterations: self.state.iteration,
            rows,
            dual_residual: last.as_ref().map_or(f64::NAN, |r| r.dual_rel),
            cg_iterations: cg_total,
            feasibility,
            stagnation_warning: stagnation,
            history,
            wall_time: start.elapsed(),
        };
        if !converged {
            log::info!(
                "ADMM stopped after {} iterations: max primal {:e}, dual {:e}",
                report.iterations,
                report.max_primal(),
                report.dual_residual
            );
        }
        Ok(ProjectionOutput { w, u, v, report })
    }
}

fn sum_in_order(parts: Vec<Vec<f64>>, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for p in parts {
        axpy(1.0, &p, &mut out);
    }
    out
}

/// Project `m` onto the generalized Minkowski set described by `spec`.
///
/// Returns `w = u + v` along with the components. Hitting `max_iters` is not
/// an error; check `report.converged`.
pub fn admm_project(m: &ModelVector, spec: &GeneralizedMinkowskiSpec, opts: &AdmmOptions) -> Result<ProjectionOutput> {
    AdmmSolver::new(m, spec, opts)?.run()
}
