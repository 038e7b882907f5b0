// SPDX-License-Identifier: Apache-2.0

//! TOML run configuration. Every table rejects unknown keys.

use std::path::{Path, PathBuf};

use minkproj_core::inverse::VideoOptions;
use minkproj_core::synthetic::{BlockyParams, VideoParams};
use minkproj_core::{AdmmOptions, SpgOptions};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub input: InputConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, rename = "set")]
    pub sets: Vec<SetConfig>,
    #[serde(default)]
    pub admm: AdmmOptions,
    #[serde(default)]
    pub spg: SpgOptions,
    pub objective: Option<ObjectiveConfig>,
    pub datafit: Option<DataFitConfig>,
    #[serde(default)]
    pub video: VideoOptions,
    #[serde(default)]
    pub sample: SampleConfig,
    pub generate: Option<GenerateConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dims: Vec<usize>,
    #[serde(default)]
    pub labels: Vec<String>,
}

/// Starting model: a GMSK file or a constant.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub model: Option<PathBuf>,
    pub constant: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Also write one PGM image per 2D slice of every output grid.
    pub pgm: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetConfig {
    U,
    V,
    Sum,
}

/// A scalar or a GMSK file with one value per entry.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ValueConfig {
    Scalar(f64),
    File(PathBuf),
}

/// Axis index or axis label.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum AxisConfig {
    Index(usize),
    Label(String),
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformConfig {
    #[default]
    Identity,
    Derivative { axis: AxisConfig },
    Gradient { axes: Vec<AxisConfig> },
    /// Sparse matrix in the triplet text format.
    Matrix { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintConfig {
    Box {
        #[serde(default = "neg_inf")]
        lower: ValueConfig,
        #[serde(default = "pos_inf")]
        upper: ValueConfig,
    },
    Fixed {
        value: ValueConfig,
    },
    L1Ball {
        radius: f64,
    },
    L2Ball {
        radius: f64,
    },
    L2Annulus {
        inner: f64,
        outer: f64,
        center: Option<PathBuf>,
    },
    Cardinality {
        k: usize,
        /// Apply the budget to each trailing-axis slice of the transformed vector.
        #[serde(default)]
        per_slice: bool,
    },
    Rank {
        r: usize,
        /// Matrix shape of each slice; defaults to the first two output axes.
        rows: Option<usize>,
        cols: Option<usize>,
    },
    Subspace {
        /// Orthonormal basis as a 2D GMSK grid, one basis vector per column.
        basis: PathBuf,
    },
    PointwiseDatafit {
        data: PathBuf,
        lower: ValueConfig,
        upper: ValueConfig,
    },
}

fn neg_inf() -> ValueConfig {
    ValueConfig::Scalar(f64::NEG_INFINITY)
}

fn pos_inf() -> ValueConfig {
    ValueConfig::Scalar(f64::INFINITY)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetConfig {
    pub label: String,
    pub target: TargetConfig,
    #[serde(default)]
    pub transform: TransformConfig,
    pub constraint: ConstraintConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveConfig {
    /// `½‖m − target‖²`.
    Proximity { target: PathBuf },
    /// `½‖G m − d‖²`.
    LeastSquares { operator: PathBuf, data: PathBuf },
    /// `Σ sin(a m) + ½ b ‖m‖²`.
    SumOfSines { a: ValueConfig, b: f64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FitConfig {
    Pointwise { lower: ValueConfig, upper: ValueConfig },
    Annulus { inner: f64, outer: f64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFitConfig {
    pub operator: PathBuf,
    pub data: PathBuf,
    pub fit: FitConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub mean: f64,
    pub std_dev: f64,
    pub count: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig { mean: 0.0, std_dev: 1.0, count: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GenerateConfig {
    #[serde(rename = "blocky-anomaly-2d")]
    BlockyAnomaly2d {
        #[serde(default)]
        params: BlockyParams,
        /// Also write a random row-selection operator and the observed data.
        mask_fraction: Option<f64>,
    },
    LowrankSparseVideo {
        #[serde(default)]
        params: VideoParams,
    },
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Every file path the config refers to, with the key that names it.
    pub fn referenced_files(&self) -> Vec<(String, &Path)> {
        let mut out: Vec<(String, &Path)> = Vec::new();
        fn value<'a>(out: &mut Vec<(String, &'a Path)>, key: String, v: &'a ValueConfig) {
            if let ValueConfig::File(p) = v {
                out.push((key, p.as_path()));
            }
        }
        if let Some(p) = &self.input.model {
            out.push(("input.model".into(), p));
        }
        for s in &self.sets {
            let key = |k: &str| format!("set '{}' {k}", s.label);
            if let TransformConfig::Matrix { path } = &s.transform {
                out.push((key("transform.path"), path));
            }
            match &s.constraint {
                ConstraintConfig::Box { lower, upper } => {
                    value(&mut out, key("constraint.lower"), lower);
                    value(&mut out, key("constraint.upper"), upper);
                }
                ConstraintConfig::Fixed { value: v } => value(&mut out, key("constraint.value"), v),
                ConstraintConfig::L2Annulus { center: Some(c), .. } => out.push((key("constraint.center"), c)),
                ConstraintConfig::Subspace { basis } => out.push((key("constraint.basis"), basis)),
                ConstraintConfig::PointwiseDatafit { data, lower, upper } => {
                    out.push((key("constraint.data"), data));
                    value(&mut out, key("constraint.lower"), lower);
                    value(&mut out, key("constraint.upper"), upper);
                }
                _ => {}
            }
        }
        match &self.objective {
            Some(ObjectiveConfig::Proximity { target }) => out.push(("objective.target".into(), target)),
            Some(ObjectiveConfig::LeastSquares { operator, data }) => {
                out.push(("objective.operator".into(), operator));
                out.push(("objective.data".into(), data));
            }
            Some(ObjectiveConfig::SumOfSines { a, .. }) => value(&mut out, "objective.a".into(), a),
            None => {}
        }
        if let Some(d) = &self.datafit {
            out.push(("datafit.operator".into(), &d.operator));
            out.push(("datafit.data".into(), &d.data));
            if let FitConfig::Pointwise { lower, upper } = &d.fit {
                value(&mut out, "datafit.fit.lower".into(), lower);
                value(&mut out, "datafit.fit.upper".into(), upper);
            }
        }
        out
    }

    /// Rewrite relative paths so they are relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let fix_value = |v: &mut ValueConfig| {
            if let ValueConfig::File(p) = v {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        if let Some(p) = &mut self.input.model {
            fix(p);
        }
        if let Some(p) = &mut self.output.dir {
            fix(p);
        }
        for s in &mut self.sets {
            if let TransformConfig::Matrix { path } = &mut s.transform {
                fix(path);
            }
            match &mut s.constraint {
                ConstraintConfig::Box { lower, upper } => {
                    fix_value(lower);
                    fix_value(upper);
                }
                ConstraintConfig::Fixed { value } => fix_value(value),
                ConstraintConfig::L2Annulus { center: Some(c), .. } => fix(c),
                ConstraintConfig::Subspace { basis } => fix(basis),
                ConstraintConfig::PointwiseDatafit { data, lower, upper } => {
                    fix(data);
                    fix_value(lower);
                    fix_value(upper);
                }
                _ => {}
            }
        }
        match &mut self.objective {
            Some(ObjectiveConfig::Proximity { target }) => fix(target),
            Some(ObjectiveConfig::LeastSquares { operator, data }) => {
                fix(operator);
                fix(data);
            }
            Some(ObjectiveConfig::SumOfSines { a, .. }) => fix_value(a),
            None => {}
        }
        if let Some(d) = &mut self.datafit {
            fix(&mut d.operator);
            fix(&mut d.data);
            if let FitConfig::Pointwise { lower, upper } = &mut d.fit {
                fix_value(lower);
                fix_value(upper);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX51: &str = r#"
seed = 3

[grid]
dims = [20, 20]
labels = ["z", "x"]

[input]
constant = 2500.0

[[set]]
label = "F1"
target = "sum"
constraint = { kind = "box", lower = 2350.0, upper = 2550.0 }

[[set]]
label = "F2"
target = "sum"
transform = { kind = "gradient", axes = ["z", "x"] }
constraint = { kind = "l1_ball", radius = 4200.0 }

[[set]]
label = "D1"
target = "u"
constraint = { kind = "box", lower = -150.0, upper = 0.0 }

[[set]]
label = "E1"
target = "v"
constraint = { kind = "fixed", value = "background.gmsk" }

[admm]
max_iters = 500
"#;

    #[test]
    fn parses_a_full_config() {
        let c = FileConfig::parse(EX51).unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.sets.len(), 4);
        assert_eq!(
            c.sets[1].transform,
            TransformConfig::Gradient { axes: vec![AxisConfig::Label("z".into()), AxisConfig::Label("x".into())] }
        );
        assert_eq!(c.sets[0].transform, TransformConfig::Identity);
        assert_eq!(c.sets[3].constraint, ConstraintConfig::Fixed { value: ValueConfig::File("background.gmsk".into()) });
        assert_eq!(c.admm.max_iters, 500);
        assert_eq!(c.admm.eps_primal, AdmmOptions::default().eps_primal);
        let files = c.referenced_files();
        assert_eq!(files.len(), 1);
        assert_eq!(files[0].0, "set 'E1' constraint.value");
    }

    #[test]
    fn unknown_keys_are_rejected_everywhere() {
        for bad in [
            "sed = 3",
            "[grid]\ndims = [2]\nlabel = [\"x\"]",
            "[admm]\nmax_iter = 3",
            "[[set]]\nlabel = \"a\"\ntarget = \"u\"\nconstraint = { kind = \"box\", lower = 0.0, uper = 1.0 }",
            "[[set]]\nlabel = \"a\"\ntarget = \"w\"\nconstraint = { kind = \"l1_ball\", radius = 1.0 }",
            "[[set]]\nlabel = \"a\"\ntarget = \"u\"\nconstraint = { kind = \"l1_ball\", radius = 1.0 }\ncolour = 1",
            "[video]\nbudgets = { pixels = 1, vertical = 2, horizontal = 3, diagonal = 4 }",
            "[spg.admm]\nmax_iters = 3",
            "[generate]\nkind = \"blocky-anomaly-2d\"\nparams = { nz = 4, depth = 2 }",
        ] {
            assert!(FileConfig::parse(bad).is_err(), "accepted: {bad}");
        }
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let mut c = FileConfig::parse(EX51).unwrap();
        c.resolve_paths(Path::new("/data/run"));
        assert_eq!(
            c.sets[3].constraint,
            ConstraintConfig::Fixed { value: ValueConfig::File("/data/run/background.gmsk".into()) }
        );
    }
}
