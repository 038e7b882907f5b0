// SPDX-License-Identifier: Apache-2.0

//! Config-driven runner behind the `minkproj` binary.
//!
//! [`RunConfig::load`] reads a TOML file and applies command-line overrides;
//! [`run`] executes one command and writes its outputs.

pub mod build;
pub mod config;
pub mod output;

use std::fmt;
use std::path::{Path, PathBuf};

use minkproj_core::inverse::VideoOptions;
use minkproj_core::synthetic::{blocky_anomaly_2d, lowrank_sparse_video, random_mask, random_model};
use minkproj_core::{
    admm_project, project_with_datafit, sample_element, spg, spg_minimize, video_decompose, AdmmOptions, ModelVector,
    ObjectiveOracle,
};

pub use config::FileConfig;
use config::{GenerateConfig, ObjectiveConfig};
use output::{Outputs, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Project,
    SolveSpg,
    ProjectDatafit,
    VideoDecompose,
    Sample,
    Check,
    Generate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Project => "project",
            Command::SolveSpg => "solve-spg",
            Command::ProjectDatafit => "project-datafit",
            Command::VideoDecompose => "video-decompose",
            Command::Sample => "sample",
            Command::Check => "check",
            Command::Generate => "generate",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub threads: Option<usize>,
}

/// Failure of a run. Always names the config file; set-level problems also
/// name the set label.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", config.display())]
    Read {
        config: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", config.display())]
    Parse {
        config: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("{}: {}{source}", config.display(), context.as_ref().map(|c| format!("{c}: ")).unwrap_or_default())]
    Core {
        config: PathBuf,
        /// The set (`set 'label'`) or config section involved, when known.
        context: Option<String>,
        #[source]
        source: minkproj_core::Error,
    },
    #[error("{}: {message}", config.display())]
    Invalid { config: PathBuf, message: String },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub config_path: PathBuf,
    pub file: FileConfig,
    pub overrides: Overrides,
}

impl RunConfig {
    /// Read and parse `path`, resolve relative paths against its directory
    /// and check that every referenced input file exists.
    pub fn load(command: Command, path: impl AsRef<Path>, overrides: Overrides) -> Result<Self, CliError> {
        let path = path.as_ref().to_path_buf();
        let text = std::fs::read_to_string(&path).map_err(|source| CliError::Read { config: path.clone(), source })?;
        let mut file = FileConfig::parse(&text).map_err(|source| CliError::Parse { config: path.clone(), source })?;
        file.resolve_paths(path.parent().unwrap_or(Path::new("")));
        for (key, p) in file.referenced_files() {
            if !p.is_file() {
                return Err(CliError::Invalid {
                    config: path,
                    message: format!("{key}: file {} does not exist", p.display()),
                });
            }
        }
        Ok(RunConfig { command, config_path: path, file, overrides })
    }

    pub fn seed(&self) -> u64 {
        self.overrides.seed.or(self.file.seed).unwrap_or(0)
    }

    pub fn threads(&self) -> Option<usize> {
        self.overrides.threads.or(self.file.threads)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.overrides
            .out_dir
            .clone()
            .or_else(|| self.file.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    /// ADMM options after `--max-iters` and `--tol`. `--max-iters` applies to
    /// the outer SPG loop instead when the command is `solve-spg`.
    pub fn admm_options(&self) -> AdmmOptions {
        let mut o = self.file.admm.clone();
        if self.command != Command::SolveSpg {
            if let Some(n) = self.overrides.max_iters {
                o.max_iters = n;
            }
        }
        if let Some(t) = self.overrides.tol {
            o.eps_primal = t;
            o.eps_dual = t;
        }
        o
    }

    fn core_err(&self, context: Option<String>) -> impl FnOnce(minkproj_core::Error) -> CliError + '_ {
        move |source| CliError::Core { config: self.config_path.clone(), context, source }
    }

    fn invalid(&self, message: impl Into<String>) -> CliError {
        CliError::Invalid { config: self.config_path.clone(), message: message.into() }
    }
}

/// What a successful run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    /// One-line human summary.
    pub summary: String,
}

/// Execute the configured command on a thread pool of the configured size.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    match cfg.threads() {
        Some(0) => Err(cfg.invalid("threads must be >= 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| cfg.invalid(format!("thread pool: {e}")))?;
            pool.install(|| dispatch(cfg))
        }
        None => dispatch(cfg),
    }
}

fn dispatch(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    log::info!("{} with {}", cfg.command, cfg.config_path.display());
    match cfg.command {
        Command::Generate => return generate(cfg),
        Command::VideoDecompose => return video(cfg),
        _ => {}
    }
    let f = &cfg.file;
    let grid = build::grid(f).map_err(cfg.core_err(None))?;
    let spec = build::spec(f, &grid).map_err(|(label, source)| CliError::Core {
        config: cfg.config_path.clone(),
        context: label.map(|l| format!("set '{l}'")),
        source,
    })?;
    let opts = cfg.admm_options();
    opts.check().map_err(cfg.core_err(None))?;
    let mut out = Outputs::new(cfg.out_dir(), f.output.pgm);
    let mut report = Report::new(cfg.command, cfg.seed());

    let summary = match cfg.command {
        Command::Check => {
            let datafit = match &f.datafit {
                Some(d) => Some(build::datafit(d, &grid).map_err(cfg.core_err(Some("[datafit]".into())))?),
                None => None,
            };
            let s = match &datafit {
                Some(d) => spec.with_sum_constraint(d.descriptor()).map_err(cfg.core_err(Some("[datafit]".into())))?,
                None => spec,
            };
            return Ok(RunOutcome {
                out_dir: cfg.out_dir(),
                files: Vec::new(),
                summary: format!(
                    "valid: grid {:?}, p={} q={} r={} s={}, all convex: {}",
                    grid.dims(),
                    s.p(),
                    s.q(),
                    s.r(),
                    s.s(),
                    s.all_convex()
                ),
            });
        }
        Command::Project => {
            let m = build::initial_model(f, &grid).map_err(cfg.core_err(None))?;
            let res = admm_project(&m, &spec, &opts).map_err(cfg.core_err(None))?;
            out.components(&res.u, &res.v, &res.w).map_err(cfg.core_err(None))?;
            out.admm_history("residuals.csv", &res.report.history).map_err(cfg.core_err(None))?;
            report.solve(&res.report);
            solve_summary(&res.report)
        }
        Command::ProjectDatafit => {
            let d = f.datafit.as_ref().ok_or_else(|| cfg.invalid("project-datafit needs a [datafit] section"))?;
            let fit = build::datafit(d, &grid).map_err(cfg.core_err(Some("[datafit]".into())))?;
            let m = build::initial_model(f, &grid).map_err(cfg.core_err(None))?;
            let res = project_with_datafit(&m, &spec, Some(&fit), &opts).map_err(cfg.core_err(None))?;
            out.components(&res.u, &res.v, &res.w).map_err(cfg.core_err(None))?;
            out.admm_history("residuals.csv", &res.report.history).map_err(cfg.core_err(None))?;
            let misfit = fit.residual(res.w.data()).map_err(cfg.core_err(None))?;
            report.solve(&res.report);
            report.set("datafit_residual_norm", minkproj_core::vecops::norm(&misfit));
            solve_summary(&res.report)
        }
        Command::SolveSpg => {
            let mut sopts = f.spg.clone();
            sopts.admm = opts;
            if let Some(n) = cfg.overrides.max_iters {
                sopts.max_iters = n;
            }
            let m0 = build::initial_model(f, &grid).map_err(cfg.core_err(None))?;
            let objective = objective(cfg, grid.len())?;
            let res = spg_minimize(objective.as_ref(), &m0, &spec, &sopts).map_err(cfg.core_err(None))?;
            let w = res.m.clone();
            out.components(&res.u, &res.v, &w).map_err(cfg.core_err(None))?;
            out.spg_history("spg_history.csv", &res.history).map_err(cfg.core_err(None))?;
            report.spg(&res);
            format!("{:?} after {} iterations, f = {:e}", res.status, res.history.len(), res.f)
        }
        Command::Sample => {
            let n = f.sample.count;
            if n == 0 {
                return Err(cfg.invalid("sample.count must be >= 1"));
            }
            let mut converged = 0;
            for k in 0..n {
                let seed = cfg.seed().wrapping_add(k as u64);
                let s = random_model(grid.clone(), f.sample.mean, f.sample.std_dev, seed).map_err(cfg.core_err(None))?;
                let (u, v, rep) = sample_element(&spec, &s, &opts).map_err(cfg.core_err(None))?;
                let w = ModelVector::new(grid.clone(), minkproj_core::vecops::add(u.data(), v.data()))
                    .map_err(cfg.core_err(None))?;
                let suffix = if n == 1 { String::new() } else { format!("_{k:03}") };
                out.named(&format!("u{suffix}"), &u).map_err(cfg.core_err(None))?;
                out.named(&format!("v{suffix}"), &v).map_err(cfg.core_err(None))?;
                out.named(&format!("w{suffix}"), &w).map_err(cfg.core_err(None))?;
                out.admm_history(&format!("residuals{suffix}.csv"), &rep.history).map_err(cfg.core_err(None))?;
                converged += rep.converged as usize;
                report.sample(k, seed, &rep);
            }
            format!("{converged}/{n} samples converged")
        }
        Command::Generate | Command::VideoDecompose => unreachable!(),
    };
    out.report(&report).map_err(cfg.core_err(None))?;
    Ok(RunOutcome { out_dir: out.dir().to_path_buf(), files: out.into_files(), summary })
}

fn solve_summary(r: &minkproj_core::SolveReport) -> String {
    format!(
        "{} after {} iterations, max primal {:.3e}, dual {:.3e}, max feasibility distance {:.3e}{}",
        if r.converged { "converged" } else { "not converged" },
        r.iterations,
        r.max_primal(),
        r.dual_residual,
        r.max_feasibility_distance(),
        if r.stagnation_warning { " (stagnation warning)" } else { "" }
    )
}

fn objective(cfg: &RunConfig, n: usize) -> Result<Box<dyn ObjectiveOracle>, CliError> {
    let o = cfg.file.objective.as_ref().ok_or_else(|| cfg.invalid("solve-spg needs an [objective] section"))?;
    let err = cfg.core_err(Some("[objective]".into()));
    Ok(match o {
        ObjectiveConfig::Proximity { target } => {
            let z = minkproj_core::io::read_gmsk(target).map_err(err)?.into_data();
            if z.len() != n {
                return Err(cfg.invalid(format!("objective.target has {} entries, the grid {n}", z.len())));
            }
            Box::new(spg::proximity_objective(z))
        }
        ObjectiveConfig::LeastSquares { operator, data } => {
            let g = minkproj_core::io::read_sparse(operator).map_err(cfg.core_err(Some("[objective]".into())))?;
            if g.cols() != n {
                return Err(cfg.invalid(format!("objective.operator has {} columns, the grid {n} cells", g.cols())));
            }
            let d = minkproj_core::io::read_gmsk(data).map_err(cfg.core_err(Some("[objective]".into())))?;
            Box::new(spg::least_squares_objective(g, d.into_data()).map_err(err)?)
        }
        ObjectiveConfig::SumOfSines { a, b } => {
            Box::new(spg::sum_of_sines_objective(build::values(a, n).map_err(err)?, *b))
        }
    })
}

fn video(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let f = &cfg.file;
    if !f.sets.is_empty() {
        return Err(cfg.invalid("video-decompose builds its own sets; remove the [[set]] entries"));
    }
    let path = f.input.model.as_ref().ok_or_else(|| cfg.invalid("video-decompose needs input.model"))?;
    let grid = build::grid(f).map_err(cfg.core_err(None))?;
    let video = build::initial_model(f, &grid).map_err(cfg.core_err(None))?;
    log::info!("video {:?} from {}", grid.dims(), path.display());
    let opts = VideoOptions { admm: cfg.admm_options(), ..f.video.clone() };
    let res = video_decompose(&video, &opts).map_err(cfg.core_err(None))?;
    let mut out = Outputs::new(cfg.out_dir(), f.output.pgm);
    let w = ModelVector::new(grid, minkproj_core::vecops::add(res.background.data(), res.anomaly.data()))
        .map_err(cfg.core_err(None))?;
    out.components(&res.background, &res.anomaly, &w).map_err(cfg.core_err(None))?;
    out.admm_history("residuals.csv", &res.report.history).map_err(cfg.core_err(None))?;
    let mut report = Report::new(cfg.command, cfg.seed());
    report.solve(&res.report);
    out.report(&report).map_err(cfg.core_err(None))?;
    Ok(RunOutcome { out_dir: out.dir().to_path_buf(), files: out.into_files(), summary: solve_summary(&res.report) })
}

fn generate(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let g = cfg.file.generate.as_ref().ok_or_else(|| cfg.invalid("generate needs a [generate] section"))?;
    let seed = cfg.seed();
    let mut out = Outputs::new(cfg.out_dir(), cfg.file.output.pgm);
    let err = || cfg.core_err(Some("[generate]".into()));
    let mut truth = Report::new(cfg.command, seed);
    let summary = match g {
        GenerateConfig::BlockyAnomaly2d { params, mask_fraction } => {
            let b = blocky_anomaly_2d(params, seed).map_err(err())?;
            out.named("model", &b.model).map_err(err())?;
            out.named("background", &b.background).map_err(err())?;
            out.named("anomaly", &b.anomaly).map_err(err())?;
            truth.blocky(&b);
            if let Some(frac) = mask_fraction {
                // the mask draws from the next seed so the model does not depend on it
                let mask = random_mask(b.model.len(), *frac, seed.wrapping_add(1)).map_err(err())?;
                let d = mask.matvec(b.model.data()).map_err(err())?;
                let dgrid = minkproj_core::ModelGrid::new(&[d.len(), 1]).map_err(err())?;
                out.sparse("mask.txt", &mask).map_err(err())?;
                out.named("data", &ModelVector::new(dgrid, d).map_err(err())?).map_err(err())?;
            }
            format!("blocky model {}x{} with rectangle {:?}", params.nz, params.nx, b.rectangle)
        }
        GenerateConfig::LowrankSparseVideo { params } => {
            let v = lowrank_sparse_video(params, seed).map_err(err())?;
            out.named("video", &v.video).map_err(err())?;
            out.named("background", &v.background).map_err(err())?;
            out.named("anomaly", &v.anomaly).map_err(err())?;
            truth.video(&v);
            format!("video {}x{}x{}", params.nx, params.ny, params.nt)
        }
    };
    out.toml("truth.toml", &truth).map_err(err())?;
    Ok(RunOutcome { out_dir: out.dir().to_path_buf(), files: out.into_files(), summary })
}
