// SPDX-License-Identifier: Apache-2.0

//! Spectral projected gradient for `min f(m)` subject to `m` in a generalized
//! Minkowski set, with one ADMM projection per iteration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::admm::{admm_project, AdmmOptions};
use crate::error::{Error, Result};
use crate::grid::ModelVector;
use crate::linops::SparseMatrix;
use crate::spec::{set_distances, GeneralizedMinkowskiSpec};
use crate::vecops::{dot, norm, norm_inf, sub};

/// Objective value and gradient at a point.
pub trait ObjectiveOracle {
    fn eval(&self, m: &[f64]) -> (f64, Vec<f64>);
}

impl<F> ObjectiveOracle for F
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    fn eval(&self, m: &[f64]) -> (f64, Vec<f64>) {
        self(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpgOptions {
    pub max_iters: usize,
    /// Number of past objective values in the nonmonotone test.
    pub ls_memory: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Sufficient decrease constant.
    pub c: f64,
    pub backtrack: f64,
    /// Iterates further than this from the set are reported in the history.
    pub feasibility_tol: f64,
    /// Stop once `‖p − m‖ ≤ step_tol · max(‖m‖, 1)`.
    pub step_tol: f64,
    /// Fixed step instead of Barzilai-Borwein; used for plain projected gradient.
    pub fixed_alpha: Option<f64>,
    /// Options of the inner projection; not read from config files.
    #[serde(skip_deserializing)]
    pub admm: AdmmOptions,
}

impl Default for SpgOptions {
    fn default() -> Self {
        SpgOptions {
            max_iters: 15,
            ls_memory: 5,
            alpha_min: 1e-8,
            alpha_max: 1e8,
            c: 1e-4,
            backtrack: 0.5,
            feasibility_tol: 1e-4,
            step_tol: 1e-10,
            fixed_alpha: None,
            admm: AdmmOptions::default(),
        }
    }
}

impl SpgOptions {
    pub fn check(&self) -> Result<()> {
        if !(self.alpha_min > 0.0 && self.alpha_min < self.alpha_max) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < alpha_min < alpha_max, got {} and {}",
                self.alpha_min, self.alpha_max
            )));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::InvalidParameter(format!("sufficient decrease c must lie in (0, 1), got {}", self.c)));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::InvalidParameter(format!("backtrack factor must lie in (0, 1), got {}", self.backtrack)));
        }
        if self.ls_memory == 0 {
            return Err(Error::InvalidParameter("ls_memory must be >= 1".into()));
        }
        if let Some(a) = self.fixed_alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::InvalidParameter(format!("fixed_alpha must be positive, got {a}")));
            }
        }
        self.admm.check()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpgStatus {
    MaxIterations,
    /// `‖p − m‖` fell below the step tolerance.
    Stationary,
    /// `⟨∇f, p − m⟩ ≥ 0` for a nonzero step: the projection did not yield a
    /// descent direction.
    NotDescent,
    /// Backtracking went below `γ = 1e-10`.
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpgRecord {
    pub iteration: usize,
    pub f: f64,
    pub step_norm: f64,
    pub gamma: f64,
    pub alpha: f64,
    /// Largest normalized distance of the accepted iterate to any set.
    pub feasibility: f64,
    pub admm_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SpgResult {
    pub m: ModelVector,
    pub u: ModelVector,
    pub v: ModelVector,
    pub f: f64,
    pub status: SpgStatus,
    pub history: Vec<SpgRecord>,
}

/// Minimize `oracle` over the set described by `spec`, starting from the
/// projection of `m0`.
///
/// Each iteration projects `m − α∇f(m)` once and backtracks along the segment
/// to that point; for convex sets every trial point is feasible. The
/// components `u`, `v` are carried along the same convex combinations.
pub fn spg_minimize(
    oracle: &dyn ObjectiveOracle,
    m0: &ModelVector,
    spec: &GeneralizedMinkowskiSpec,
    opts: &SpgOptions,
) -> Result<SpgResult> {
    opts.check()?;
    let grid = spec.grid().clone();
    let start = admm_project(m0, spec, &opts.admm)?;
    let mut m = start.w.into_data();
    let mut u = start.u.into_data();
    let mut v = start.v.into_data();
    let (mut f, mut g) = oracle.eval(&m);
    check_finite(f, &g, m.len())?;
    let mut recent = vec![f];
    let mut history = Vec::new();
    let gi = norm_inf(&g);
    let mut alpha = match opts.fixed_alpha {
        Some(a) => a,
        None if gi > 0.0 => (1.0 / gi).clamp(opts.alpha_min, opts.alpha_max),
        None => 1.0,
    };
    let mut status = SpgStatus::MaxIterations;

    for it in 1..=opts.max_iters {
        let trial: Vec<f64> = m.iter().zip(&g).map(|(a, b)| a - alpha * b).collect();
        let proj = admm_project(&ModelVector::new(grid.clone(), trial)?, spec, &opts.admm)?;
        let d = sub(proj.w.data(), &m);
        let du = sub(proj.u.data(), &u);
        let dv = sub(proj.v.data(), &v);
        let step_norm = norm(&d);
        if step_norm <= opts.step_tol * norm(&m).max(1.0) {
            status = SpgStatus::Stationary;
            break;
        }
        let slope = dot(&g, &d);
        if slope >= 0.0 {
            log::warn!("projected step is not a descent direction (slope {slope:e}); stopping");
            status = SpgStatus::NotDescent;
            break;
        }

        let f_ref = recent.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut gamma = 1.0;
        let accepted = loop {
            let cand: Vec<f64> = m.iter().zip(&d).map(|(a, b)| a + gamma * b).collect();
            let (fc, gc) = oracle.eval(&cand);
            if fc.is_finite() && fc <= f_ref + opts.c * gamma * slope {
                break Some((cand, fc, gc));
            }
            gamma *= opts.backtrack;
            if gamma < 1e-10 {
                break None;
            }
        };
        let Some((m_new, f_new, g_new)) = accepted else {
            log::warn!("line search failed at iteration {it}");
            status = SpgStatus::LineSearchFailed;
            break;
        };
        check_finite(f_new, &g_new, m.len())?;

        for k in 0..m.len() {
            u[k] += gamma * du[k];
            v[k] += gamma * dv[k];
        }
        let s = sub(&m_new, &m);
        let y = sub(&g_new, &g);
        alpha = match opts.fixed_alpha {
            Some(a) => a,
            None => {
                let sy = dot(&s, &y);
                if sy <= 0.0 { opts.alpha_max } else { (dot(&s, &s) / sy).clamp(opts.alpha_min, opts.alpha_max) }
            }
        };
        m = m_new;
        f = f_new;
        g = g_new;
        recent.push(f);
        if recent.len() > opts.ls_memory {
            recent.remove(0);
        }

        let feasibility = set_distances(spec, &u, &v)?
            .iter()
            .fold(0.0f64, |a, d| a.max(d.distance));
        if feasibility > opts.feasibility_tol {
            log::debug!("iterate {it} is {feasibility:e} from the set");
        }
        history.push(SpgRecord {
            iteration: it,
            f,
            step_norm,
            gamma,
            alpha,
            feasibility,
            admm_iterations: proj.report.iterations,
        });
    }

    Ok(SpgResult {
        m: ModelVector::new(grid.clone(), m)?,
        u: ModelVector::new(grid.clone(), u)?,
        v: ModelVector::new(grid, v)?,
        f,
        status,
        history,
    })
}

fn check_finite(f: f64, g: &[f64], n: usize) -> Result<()> {
    if g.len() != n {
        return Err(Error::DimensionMismatch {
            context: "objective gradient",
            expected: n,
            got: g.len(),
        });
    }
    if !f.is_finite() {
        return Err(Error::InvalidParameter(format!("objective value is not finite: {f}")));
    }
    if let Some(i) = g.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

/// Compare `⟨∇f(m), d⟩` with central differences along `directions` random
/// unit vectors. For each direction the smallest relative error over the
/// steps `1e-4, 1e-5, 1e-6` counts; the worst direction is returned.
pub fn gradient_check(oracle: &dyn ObjectiveOracle, m: &[f64], directions: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (_, g) = oracle.eval(m);
    let mut worst = 0.0f64;
    for _ in 0..directions {
        let mut d: Vec<f64> = (0..m.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let dn = norm(&d);
        d.iter_mut().for_each(|x| *x /= dn);
        let exact = dot(&g, &d);
        let best = [1e-4, 1e-5, 1e-6]
            .iter()
            .map(|&h| {
                let plus: Vec<f64> = m.iter().zip(&d).map(|(a, b)| a + h * b).collect();
                let minus: Vec<f64> = m.iter().zip(&d).map(|(a, b)| a - h * b).collect();
                let fd = (oracle.eval(&plus).0 - oracle.eval(&minus).0) / (2.0 * h);
                (fd - exact).abs() / exact.abs().max(fd.abs()).max(f64::MIN_POSITIVE)
            })
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(best);
    }
    worst
}

/// `½‖m − z‖²`.
pub fn proximity_objective(z: Vec<f64>) -> impl Fn(&[f64]) -> (f64, Vec<f64>) {
    move |m: &[f64]| {
        let r = sub(m, &z);
        (0.5 * dot(&r, &r), r)
    }
}

/// `½‖G m − d‖²`.
pub fn least_squares_objective(g: SparseMatrix, d: Vec<f64>) -> Result<impl Fn(&[f64]) -> (f64, Vec<f64>)> {
    if g.rows() != d.len() {
        return Err(Error::DimensionMismatch {
            context: "least-squares data",
            expected: g.rows(),
            got: d.len(),
        });
    }
    Ok(move |m: &[f64]| {
        let mut r = vec![0.0; g.rows()];
        g.matvec_into(m, &mut r);
        for (ri, di) in r.iter_mut().zip(&d) {
            *ri -= di;
        }
        let mut grad = vec![0.0; g.cols()];
        g.rmatvec_add(&r, &mut grad);
        (0.5 * dot(&r, &r), grad)
    })
}

/// `Σ sin(a_k m_k) + ½ b ‖m‖²`, a smooth nonconvex test objective.
pub fn sum_of_sines_objective(a: Vec<f64>, b: f64) -> impl Fn(&[f64]) -> (f64, Vec<f64>) {
    move |m: &[f64]| {
        let mut f = 0.5 * b * dot(m, m);
        let g = m
            .iter()
            .zip(&a)
            .map(|(&x, &ak)| {
                f += (ak * x).sin();
                ak * (ak * x).cos() + b * x
            })
            .collect();
        (f, g)
    }
}
