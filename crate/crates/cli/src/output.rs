// SPDX-License-Identifier: Apache-2.0

//! Output directory layout: GMSK grids, a TOML report, CSV traces, PGM images.

use std::path::{Path, PathBuf};

use minkproj_core::admm::IterationRecord;
use minkproj_core::io::{write_gmsk, write_pgm_slices, write_sparse};
use minkproj_core::spg::SpgRecord;
use minkproj_core::synthetic::{BlockyModel, SyntheticVideo};
use minkproj_core::{Error, ModelVector, Result, SolveReport, SparseMatrix, SpgResult};
use serde::Serialize;

use crate::Command;

pub struct Outputs {
    dir: PathBuf,
    pgm: bool,
    files: Vec<PathBuf>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

impl Outputs {
    pub fn new(dir: PathBuf, pgm: bool) -> Self {
        Outputs { dir, pgm, files: Vec::new() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn into_files(self) -> Vec<PathBuf> {
        self.files
    }

    fn path(&mut self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.dir).map_err(io_err(&self.dir))?;
        let p = self.dir.join(name);
        self.files.push(p.clone());
        Ok(p)
    }

    /// `<stem>.gmsk`, plus PGM slices under `pgm/` when enabled and the grid
    /// has at least two axes.
    pub fn named(&mut self, stem: &str, m: &ModelVector) -> Result<()> {
        let p = self.path(&format!("{stem}.gmsk"))?;
        write_gmsk(&p, m)?;
        if self.pgm && m.grid().ndim() >= 2 {
            let dir = self.dir.join("pgm");
            std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            self.files.extend(write_pgm_slices(&dir, stem, m)?);
        }
        Ok(())
    }

    pub fn components(&mut self, u: &ModelVector, v: &ModelVector, w: &ModelVector) -> Result<()> {
        self.named("u", u)?;
        self.named("v", v)?;
        self.named("w", w)
    }

    pub fn sparse(&mut self, name: &str, a: &SparseMatrix) -> Result<()> {
        let p = self.path(name)?;
        write_sparse(&p, a)
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let p = self.path(name)?;
        let fmt = |e: csv::Error| Error::Format { path: p.clone(), message: e.to_string() };
        let mut w = csv::Writer::from_path(&p).map_err(fmt)?;
        for r in rows {
            w.serialize(r).map_err(fmt)?;
        }
        w.flush().map_err(io_err(&p))
    }

    pub fn admm_history(&mut self, name: &str, h: &[IterationRecord]) -> Result<()> {
        self.csv(name, h)
    }

    pub fn spg_history(&mut self, name: &str, h: &[SpgRecord]) -> Result<()> {
        self.csv(name, h)
    }

    pub fn toml<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name)?;
        let text = toml::to_string(value).map_err(|e| Error::Format { path: p.clone(), message: e.to_string() })?;
        std::fs::write(&p, text).map_err(io_err(&p))
    }

    pub fn report(&mut self, r: &Report) -> Result<()> {
        self.toml("report.toml", r)
    }
}

/// The summary written as `report.toml` (or `truth.toml` for generated data).
/// Holds no timings, so identical runs give identical files.
#[derive(Debug, Clone, Serialize)]
pub struct Report(toml::Table);

#[derive(Serialize)]
struct SolveSummary<'a> {
    converged: bool,
    iterations: usize,
    max_primal: f64,
    dual_residual: f64,
    cg_iterations: usize,
    stagnation_warning: bool,
    max_feasibility_distance: f64,
    rows: &'a [minkproj_core::admm::RowReport],
    feasibility: &'a [minkproj_core::spec::SetDistance],
}

impl<'a> From<&'a SolveReport> for SolveSummary<'a> {
    fn from(r: &'a SolveReport) -> Self {
        SolveSummary {
            converged: r.converged,
            iterations: r.iterations,
            max_primal: r.max_primal(),
            dual_residual: r.dual_residual,
            cg_iterations: r.cg_iterations,
            stagnation_warning: r.stagnation_warning,
            max_feasibility_distance: r.max_feasibility_distance(),
            rows: &r.rows,
            feasibility: &r.feasibility,
        }
    }
}

fn value<T: Serialize>(v: &T) -> toml::Value {
    toml::Value::try_from(v).expect("report values are plain data")
}

impl Report {
    pub fn new(command: Command, seed: u64) -> Self {
        let mut t = toml::Table::new();
        t.insert("command".into(), command.name().into());
        t.insert("seed".into(), value(&seed));
        Report(t)
    }

    pub fn set<T: Serialize>(&mut self, key: &str, v: T) {
        self.0.insert(key.into(), value(&v));
    }

    pub fn get(&self, key: &str) -> Option<&toml::Value> {
        self.0.get(key)
    }

    pub fn solve(&mut self, r: &SolveReport) {
        self.set("solve", SolveSummary::from(r));
    }

    pub fn spg(&mut self, r: &SpgResult) {
        self.set("status", format!("{:?}", r.status));
        self.set("objective", r.f);
        self.set("iterations", r.history.len());
        if let Some(last) = r.history.last() {
            self.set("final_feasibility", last.feasibility);
        }
    }

    pub fn sample(&mut self, k: usize, seed: u64, r: &SolveReport) {
        #[derive(Serialize)]
        struct Sample<'a> {
            index: usize,
            seed: u64,
            #[serde(flatten)]
            solve: SolveSummary<'a>,
        }
        let entry = value(&Sample { index: k, seed, solve: r.into() });
        self.0
            .entry("sample")
            .or_insert_with(|| toml::Value::Array(Vec::new()))
            .as_array_mut()
            .expect("sample entries form an array")
            .push(entry);
    }

    pub fn blocky(&mut self, b: &BlockyModel) {
        self.set("kind", "blocky-anomaly-2d");
        self.set("rectangle", &b.rectangle);
        self.set("support_size", b.support().iter().filter(|&&s| s).count());
        self.set("total_variation", b.total_variation());
    }

    pub fn video(&mut self, v: &SyntheticVideo) {
        self.set("kind", "lowrank-sparse-video");
        self.set("support_size", v.support().iter().filter(|&&s| s).count());
        let positions: Vec<Vec<[usize; 2]>> =
            v.positions.iter().map(|f| f.iter().map(|&(x, y)| [x, y]).collect()).collect();
        self.set("positions", positions);
    }
}
